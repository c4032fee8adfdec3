"""Experiment configs, cached reference solutions, CSV traces and rate fits."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import os
import re
import sys
import tempfile
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import problems as pb
from .distributed import FAMILY, LiftedProblem, NodeSpec, simulate
from .operators import ParameterError
from .schedules import Schedule
from .solvers import (
    COLUMNS,
    STEPS,
    DivergenceError,
    Probe,
    StoppingRule,
    TermBundle,
    TraceRecord,
    c0_chambolle_pock_i,
    c0_pd3o,
    c0_pddy,
    init_state,
    rho_lower_pddy,
    run,
)

log = logging.getLogger(__name__)

Array = np.ndarray

PROBLEMS = ("deblur-tv", "deblur-huber", "deblur-none", "svm-hinge")
CACHE_VERSION = 1


class ConfigError(ParameterError):
    """Invalid or unresolvable experiment configuration."""


@dataclass
class ExperimentConfig:
    """One run: problem, algorithm, schedule, stopping rule and output location.

    ``M = 0`` on the SVM problem means one node per sample. ``sigma`` is only
    used by Condat-Vu; ``eta`` overrides the default ||K||^2 bound.
    """

    name: str = "run"
    problem: str = "deblur-tv"
    n: int = 64
    lam: float = 0.6
    nu: float = 0.1
    noise: float = 0.01
    peak: float = 255.0
    blur_sigma: float = 1.5
    mu_F: float = 0.01
    dataset: str = "toy"
    alpha: float = 0.1
    algorithm: str = "pd3o"
    distributed: bool = False
    schedule: str = "constant"
    gamma0: float = 1.7
    kappa: float = 0.15
    sigma: Optional[float] = None
    eta: Optional[float] = None
    max_iter: int = 10000
    tol: float = 0.0
    record_every: int = 10
    M: int = 1
    omega: str = "uniform"
    x0: str = "y"
    seed: int = 0
    out: str = "out"

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}; expected one of {PROBLEMS}")
        if self.algorithm not in STEPS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.schedule not in ("constant", "accel_pd3o", "accel_pddy"):
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        if self.x0 not in ("y", "zero"):
            raise ConfigError("x0 must be 'y' or 'zero'")
        if self.max_iter < 1 or self.record_every < 1:
            raise ConfigError("max_iter and record_every must be >= 1")
        if self.M < 0:
            raise ConfigError("M must be >= 0")

    def to_toml(self) -> str:
        return tomli_w.dumps({k: v for k, v in asdict(self).items() if v is not None})

    @classmethod
    def from_toml(cls, text: str) -> "ExperimentConfig":
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"malformed config: {e}") from None
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        clean = {}
        for k, v in data.items():
            default = known[k].default
            if isinstance(default, float) and isinstance(v, int) and not isinstance(v, bool):
                v = float(v)
            clean[k] = v
        return cls(**clean)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_toml(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.to_toml())

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def problem_key(self) -> dict:
        """Parameters that determine the problem (and so its solution)."""
        keys = ["problem", "seed"]
        if self.problem.startswith("deblur"):
            keys += ["n", "noise", "peak", "blur_sigma", "mu_F"]
            if self.problem != "deblur-none":
                keys += ["lam"]
            if self.problem == "deblur-huber":
                keys += ["nu"]
        else:
            keys += ["dataset", "alpha"]
        return {k: getattr(self, k) for k in keys}


# ---------------------------------------------------------------------------
# Presets


_PRESET = re.compile(r"^(deblur-tv|deblur-huber|deblur-none)-(\d+)$|^svm-hinge-(toy|australian)$")


def preset(name: str, variant: str = "nonaccelerated", algorithm: Optional[str] = None) -> list:
    """Configs for ``deblur-tv-{n}``, ``deblur-huber-{n}``, ``deblur-none-{n}`` or ``svm-hinge-{toy|australian}``.

    ``variant`` is "nonaccelerated", "accelerated" or "all".
    """
    m = _PRESET.match(name)
    if m is None:
        raise ConfigError(f"unknown preset {name!r}")
    if variant not in ("nonaccelerated", "accelerated", "all"):
        raise ConfigError(f"unknown variant {variant!r}")
    runs = []
    if m.group(1):
        problem, n = m.group(1), int(m.group(2))
        base = ExperimentConfig(problem=problem, n=n, gamma0=1.7, kappa=0.15, eta=8.0 if problem != "deblur-none" else None)
        if problem == "deblur-none":
            const = [("forward_backward", "constant")]
            accel = [("forward_backward", "accel_pd3o")]
        else:
            const = [("pd3o", "constant"), ("pddy", "constant"), ("condat_vu_i", "constant")]
            accel = [("pd3o", "accel_pd3o"), ("pddy", "accel_pddy")]
        for alg, kind in (const if variant != "accelerated" else []) + (accel if variant != "nonaccelerated" else []):
            cfg = base.replace(algorithm=alg, schedule=kind, name=f"{name}-{alg}-{kind}")
            if alg.startswith("condat_vu"):
                cfg = condat_vu_settings(cfg)
            runs.append(cfg)
    else:
        base = ExperimentConfig(
            problem="svm-hinge",
            dataset=m.group(3),
            alpha=0.1,
            gamma0=0.1,
            algorithm="douglas_rachford",
            distributed=True,
            M=0,
            omega="uniform",
            x0="zero",
        )
        kinds = {"nonaccelerated": ["constant"], "accelerated": ["accel_pd3o"], "all": ["constant", "accel_pd3o"]}
        for kind in kinds[variant]:
            runs.append(base.replace(schedule=kind, name=f"{name}-douglas_rachford-{kind}"))
    if algorithm is not None:
        runs = [r for r in runs if r.algorithm == algorithm]
        if not runs:
            raise ConfigError(f"preset {name!r} has no {algorithm} run for variant {variant!r}")
    return runs


def condat_vu_settings(cfg: ExperimentConfig, gamma: float = 0.05, margin: float = 0.99) -> ExperimentConfig:
    """Condat-Vu stepsizes: small gamma, sigma at ``margin`` of the admissible maximum.

    With ||K||^2 = 8 and L_F = 1 the condition gamma (sigma ||K||^2 + L/2) < 1
    gives sigma < (1/gamma - 1/2) / 8.
    """
    sigma = margin * (1.0 / gamma - 0.5) / 8.0
    return cfg.replace(gamma0=gamma, sigma=sigma, eta=None)


# ---------------------------------------------------------------------------
# Problem construction


@dataclass
class Instance:
    n: int
    objective: object
    x0: Array
    bundle: Optional[TermBundle] = None
    lifted: Optional[LiftedProblem] = None
    meta: dict = field(default_factory=dict)

    @property
    def mu_F(self) -> float:
        if self.bundle is not None:
            return self.bundle.mu_F
        return self.lifted.mu_F_hat

    @property
    def mu_R(self) -> float:
        return self.bundle.mu_R if self.bundle is not None else self.lifted.mu_R


def _svm_data(cfg: ExperimentConfig) -> pb.SvmDataset:
    if cfg.dataset == "toy":
        return pb.toy_svm_dataset()
    path = Path(cfg.dataset)
    if cfg.dataset == "australian":
        path = Path(os.environ.get("PROXSPLIT_DATA", ".")) / "australian"
    if not path.exists():
        raise ConfigError(f"dataset file {path} not found (the australian set is not bundled)")
    return pb.load_libsvm(path)


def build_instance(cfg: ExperimentConfig) -> Instance:
    if cfg.problem.startswith("deblur"):
        reg = cfg.problem.split("-", 1)[1]
        P = pb.deblur_problem(
            cfg.n, regularizer=reg, lam=cfg.lam, nu=cfg.nu, noise=cfg.noise, seed=cfg.seed,
            blur_sigma=cfg.blur_sigma, mu=cfg.mu_F, peak=cfg.peak,
        )
        x0 = P.y.pixels.copy() if cfg.x0 == "y" else np.zeros(P.y.pixels.size)
        meta = dict(lam=cfg.lam, nu=cfg.nu, noise=cfg.noise, peak=cfg.peak, L_F=P.F.L, mu_F=P.F.mu)
        if cfg.distributed:
            M = max(cfg.M, 1)
            nodes = [NodeSpec(F=P.F, H=P.H, K=P.K) for _ in range(M)]
            lp = LiftedProblem(P.y.pixels.size, nodes, R=P.R, family=FAMILY[cfg.algorithm], shared_F=True,
                               mu_F_hat=P.F.mu, eta=cfg.eta, weights=cfg.omega)
            meta.update(M=M, omegas=lp.omegas.tolist(), eta=lp.eta)
            return Instance(lp.n, lp.objective, x0, lifted=lp, meta=meta)
        b = P.bundle(eta=cfg.eta if P.K is not None else None)
        meta.update(eta=b.eta)
        return Instance(b.n, b.objective, x0, bundle=b, meta=meta)
    data = _svm_data(cfg)
    meta = dict(alpha=cfg.alpha, samples=data.M, features=data.d)
    x0 = np.zeros(data.d)
    if cfg.distributed:
        nodes = pb.svm_nodes(data)
        if cfg.M not in (0, data.M):
            raise ConfigError(f"the SVM problem has one node per sample (M = {data.M})")
        lp = LiftedProblem(data.d, nodes, R=pb.svm_regularizer(cfg.alpha), family=FAMILY[cfg.algorithm],
                           eta=cfg.eta, weights=cfg.omega)
        meta.update(M=lp.M, omegas=lp.omegas.tolist(), eta=lp.eta)
        return Instance(data.d, lp.objective, x0, lifted=lp, meta=meta)
    b = pb.svm_bundle(data, cfg.alpha)
    if cfg.eta is not None:
        b = TermBundle(b.n, R=b.R, H=b.H, K=b.K, eta=cfg.eta)
    return Instance(data.d, b.objective, x0, bundle=b, meta=meta)


# ---------------------------------------------------------------------------
# Reference solutions


@dataclass
class Reference:
    x: Array
    psi: float
    u: Optional[Array] = None


def default_cache_dir() -> Path:
    env = os.environ.get("PROXSPLIT_CACHE")
    return Path(env) if env else Path.home() / ".cache" / "proxsplit"


def reference_key(cfg: ExperimentConfig) -> str:
    payload = json.dumps({"v": CACHE_VERSION, **cfg.problem_key()}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:24]


def _solve_reference(cfg: ExperimentConfig) -> Reference:
    """Long run of the fastest applicable sequential solver.

    Linear-rate problems stop once the relative change is below 1e-14 and
    then run half as many iterations again; the others run 10^5 iterations.
    """
    seq = cfg.replace(distributed=False, eta=None if cfg.problem == "svm-hinge" else 8.0)
    if cfg.problem == "deblur-none":
        seq = seq.replace(eta=None)
    inst = build_instance(seq)
    b = inst.bundle
    x0 = inst.x0
    if cfg.problem == "deblur-huber":
        # smooth H: linear rate; stop on a tiny relative change, then run half as long again
        sch = Schedule("constant", 1.7)
        r = run("pd3o", b, sch, StoppingRule(100000, tol=1e-14, min_iter=1000), x0=x0)
        r = run("pd3o", b, sch, StoppingRule(max(r.iterations // 2, 100)), state=r.state)
        x, u = r.state["x"], r.state["u"]
    elif cfg.problem == "deblur-tv":
        sch = Schedule("accel_pd3o", 1.7, 0.15, b.mu_F, 0.0)
        r = run("pd3o", b, sch, StoppingRule(100000), x0=x0)
        x, u = r.state["x"], r.state["u"]
    elif cfg.problem == "deblur-none":
        g = 2.0 / (b.L_F + b.mu_F)
        r = run("forward_backward", b, Schedule("constant", g), StoppingRule(100000, tol=1e-14, min_iter=1000), x0=x0)
        r = run("forward_backward", b, Schedule("constant", g), StoppingRule(max(r.iterations // 2, 100)), state=r.state)
        x, u = r.state["x"], None
    else:
        sch = Schedule("accel_pd3o", 1.0, 0.15, 0.0, b.mu_R)
        r = run("chambolle_pock_i", b, sch, StoppingRule(100000), x0=x0)
        x, u = r.state["x"], r.state["u"]
        polished = pb.svm_polish(_svm_data(cfg), cfg.alpha, x)
        if polished is not None and b.objective(polished)[0] <= b.objective(x)[0] + 1e-12:
            x = polished
    psi, feasible = b.objective(x)
    if not feasible:
        warnings.warn("reference solution is not feasible", stacklevel=2)
    return Reference(x, psi, u)


def _atomic_save(path: Path, **arrays) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, **arrays)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def reference_solution(cfg: ExperimentConfig, cache_dir=None, use_cache: bool = True) -> Reference:
    """x* and Psi(x*) for the problem of ``cfg``, cached on disk by a content hash."""
    cache = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    path = cache / f"ref-{reference_key(cfg)}.npz"
    if use_cache and path.exists():
        try:
            with np.load(path) as z:
                x = z["x"].copy()
                psi = float(z["psi"])
                u = z["u"].copy() if "u" in z.files else None
            if not np.all(np.isfinite(x)):
                raise ValueError("non-finite entries")
            return Reference(x, psi, u)
        except Exception as e:  # any unreadable cache file is recomputed
            warnings.warn(f"corrupt reference cache {path} ({e}); recomputing", stacklevel=2)
    ref = _solve_reference(cfg)
    if use_cache:
        arrays = dict(x=ref.x, psi=np.array(ref.psi))
        if ref.u is not None:
            arrays["u"] = ref.u
        _atomic_save(path, **arrays)
    return ref


# ---------------------------------------------------------------------------
# Rate estimation


class RateError(ValueError):
    pass


@dataclass(frozen=True)
class RateEstimate:
    model: str
    slope: float
    r_squared: float
    window: tuple

    @property
    def factor(self) -> float:
        """Per-iteration factor exp(slope) of the geometric model."""
        return math.exp(self.slope)


def _series(trace, column: str) -> tuple[Array, Array]:
    if isinstance(trace, dict):
        return np.asarray(trace["k"], dtype=float), np.asarray(trace[column], dtype=float)
    k = np.array([r.k for r in trace], dtype=float)
    v = np.array([getattr(r, column) for r in trace], dtype=float)
    return k, v


def estimate_rate(
    trace,
    column: str = "dist_sq",
    model: str = "powerlaw",
    window: Optional[tuple] = None,
    floor: float = 1e-15,
) -> RateEstimate:
    """Least-squares slope of log(value) against log(k) ("powerlaw") or k ("linear_geometric").

    The default window is the last half of the trace. Values at or below
    ``floor`` mark the machine-precision plateau: the window is cut just before
    the first of them.
    """
    if model not in ("powerlaw", "linear_geometric"):
        raise RateError(f"unknown model {model!r}")
    k, v = _series(trace, column)
    if k.size == 0:
        raise RateError("empty trace")
    lo, hi = window if window is not None else (k[-1] / 2, k[-1])
    sel = (k >= lo) & (k <= hi)
    k, v = k[sel], v[sel]
    bad = ~(v > floor)
    if np.any(bad):
        cut = int(np.argmax(bad))
        k, v = k[:cut], v[:cut]
    if k.size < 2:
        raise RateError(f"fewer than two usable points in window ({lo:g}, {hi:g})")
    if k.size < 50:
        log.warning("rate fit on only %d points", k.size)
    t = np.log(k) if model == "powerlaw" else k
    y = np.log(v)
    A = np.vstack([t, np.ones_like(t)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return RateEstimate(model, float(coef[0]), min(max(r2, 0.0), 1.0), (float(k[0]), float(k[-1])))


# ---------------------------------------------------------------------------
# CSV output


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def write_trace_csv(path, trace: Sequence[TraceRecord]) -> None:
    lines = [",".join(COLUMNS)]
    for r in trace:
        lines.append(",".join(_fmt(getattr(r, c)) for c in COLUMNS))
    Path(path).write_text("\n".join(lines) + "\n")


def read_trace_csv(path) -> dict:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header != list(COLUMNS):
            raise ValueError(f"{path}: unexpected CSV header {header}")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    cols = list(zip(*rows)) if rows else [[] for _ in COLUMNS]
    return {c: np.array(col, dtype=float) for c, col in zip(COLUMNS, cols)}


GNUPLOT = """set terminal pngcairo size 1000,420
set output '{png}'
set datafile separator ','
set logscale xy
set format y '%.0e'
set multiplot layout 1,2
set title 'Psi(x^k) - Psi(x*)'
plot '{csv}' every ::1 using 1:3 with lines title '{name}'
set title '||x^k - x*||^2'
plot '{csv}' every ::1 using 1:4 with lines title '{name}'
unset multiplot
"""


# ---------------------------------------------------------------------------
# Experiments


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    trace: list
    csv_path: Optional[Path]
    json_path: Optional[Path]
    rates: dict
    diverged: bool = False


def make_schedule(cfg: ExperimentConfig, inst: Instance) -> Schedule:
    kind = cfg.schedule
    if kind == "constant":
        return Schedule("constant", cfg.gamma0)
    return Schedule(kind, cfg.gamma0, cfg.kappa, inst.mu_F, inst.mu_R if kind == "accel_pd3o" else 0.0)


def _reference_constants(cfg, inst: Instance, ref: Reference, schedule: Schedule) -> dict:
    """c0 of the accelerated bounds and the lower linear-rate estimate, where defined."""
    out = {}
    b = inst.bundle
    if b is None or ref.u is None:
        return out
    alg = cfg.algorithm
    try:
        if schedule.kind != "constant":
            s0 = init_state(alg, b, inst.x0, schedule.gamma0)
            g = schedule.take(2)
            s1 = STEPS[alg](s0, b, g[0], g[1])
            if alg == "pd3o" and b.K is not None:
                out["c0"] = c0_pd3o(b, cfg.gamma0, cfg.kappa, s0["q"], s0["u"], s1["x"], ref.x, ref.u)
            elif alg == "pddy" and b.K is not None:
                out["c0"] = c0_pddy(b, cfg.gamma0, cfg.kappa, s0["u"], s1["u"], s1["x"], ref.x, ref.u)
            elif alg == "chambolle_pock_i":
                out["c0"] = c0_chambolle_pock_i(b, cfg.gamma0, s0["x"], s0["u"], s1["x"], ref.x, ref.u)
        elif b.H is not None and b.H.smooth_L is not None and alg in ("pddy", "loris_verhoeven"):
            out["rho_lower"] = rho_lower_pddy(cfg.gamma0, b.mu_F, b.L_F, b.eta, b.H.smooth_L)
    except (KeyError, ValueError) as e:
        log.info("reference constants unavailable: %s", e)
    return {k: float(v) for k, v in out.items()}


def run_experiment(
    cfg: ExperimentConfig,
    out_dir=None,
    emit_gnuplot: bool = False,
    cache_dir=None,
    mode: str = "sequential",
    write: bool = True,
) -> ExperimentResult:
    """Run one config; write ``<name>.csv`` and ``<name>.json`` into ``out_dir``.

    On divergence the partial trace is still written and ``diverged`` is set.
    """
    inst = build_instance(cfg)
    ref = reference_solution(cfg, cache_dir=cache_dir)
    schedule = make_schedule(cfg, inst)
    probe = Probe(inst.objective, ref.x, ref.psi, ergodic=True, every=cfg.record_every)
    stop = StoppingRule(cfg.max_iter, tol=cfg.tol)
    diverged = False
    try:
        if cfg.distributed:
            res = simulate(cfg.algorithm, inst.lifted, schedule, stop, x0=inst.x0, mode=mode, probe=probe,
                           sigma=cfg.sigma)
        else:
            res = run(cfg.algorithm, inst.bundle, schedule, stop, x0=inst.x0, probe=probe, sigma=cfg.sigma)
        trace = res.trace
    except DivergenceError as e:
        trace, diverged = e.trace, True
    rates = {}
    for col in ("psi_gap", "dist_sq", "ergodic_gap"):
        try:
            rates[col] = asdict(estimate_rate(trace, col, "powerlaw"))
        except RateError:
            rates[col] = None
    csv_path = json_path = None
    if write:
        out = Path(out_dir if out_dir is not None else cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{cfg.name}.csv"
        json_path = out / f"{cfg.name}.json"
        write_trace_csv(csv_path, trace)
        sidecar = dict(
            config=asdict(cfg),
            problem=inst.meta,
            psi_star=ref.psi,
            reference_key=reference_key(cfg),
            constants=_reference_constants(cfg, inst, ref, schedule),
            rates=rates,
            diverged=diverged,
            iterations=trace[-1].k if trace else 0,
        )
        json_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True, default=float) + "\n")
        if emit_gnuplot:
            (out / f"{cfg.name}.gp").write_text(
                GNUPLOT.format(csv=csv_path.name, png=f"{cfg.name}.png", name=cfg.name)
            )
    return ExperimentResult(cfg, trace, csv_path, json_path, rates, diverged)


# ---------------------------------------------------------------------------
# Theorem checks


@dataclass(frozen=True)
class Check:
    name: str
    trace: str  # key into the trace set
    column: str
    model: str
    bound: float
    window: Optional[tuple] = (1e2, 1e4)
    min_r2: float = 0.0


DEFAULT_CHECKS = (
    Check("sublinear PD3O psi_gap", "deblur-tv-pd3o-constant", "psi_gap", "powerlaw", -0.5),
    Check("sublinear PD3O ergodic_gap", "deblur-tv-pd3o-constant", "ergodic_gap", "powerlaw", -0.9),
    Check("sublinear PDDY psi_gap", "deblur-tv-pddy-constant", "psi_gap", "powerlaw", -0.5),
    Check("sublinear PDDY ergodic_gap", "deblur-tv-pddy-constant", "ergodic_gap", "powerlaw", -0.9),
    Check("forward-backward psi_gap", "deblur-none-forward_backward-constant", "psi_gap", "powerlaw", -1.0),
    Check("accelerated PD3O dist_sq", "deblur-tv-pd3o-accel_pd3o", "dist_sq", "powerlaw", -1.7),
    Check("accelerated PDDY dist_sq", "deblur-tv-pddy-accel_pddy", "dist_sq", "powerlaw", -1.7),
    Check("linear PD3O dist_sq", "deblur-huber-pd3o-constant", "dist_sq", "linear_geometric", 0.0, None, 0.99),
    Check("linear PDDY dist_sq", "deblur-huber-pddy-constant", "dist_sq", "linear_geometric", 0.0, None, 0.99),
    Check("SVM DR psi_gap", "svm-hinge-douglas_rachford-constant", "psi_gap", "powerlaw", -0.5),
    Check("SVM accelerated DR dist_sq", "svm-hinge-douglas_rachford-accel_pd3o", "dist_sq", "powerlaw", -1.7),
)


@dataclass
class CheckRow:
    name: str
    status: str  # PASS, FAIL or SKIPPED
    measured: float
    bound: float
    r_squared: float = math.nan
    note: str = ""


def check_theorems(traces: dict, checks: Sequence[Check] = DEFAULT_CHECKS) -> list:
    """Pass/fail rows for the rate checks; a missing trace is SKIPPED."""
    rows = []
    for c in checks:
        tr = traces.get(c.trace)
        if tr is None:
            rows.append(CheckRow(c.name, "SKIPPED", math.nan, c.bound, note=f"no trace {c.trace}"))
            continue
        if c.model == "linear_geometric":
            try:
                est = estimate_rate(tr, c.column, c.model, window=(1, math.inf), floor=1e-20)
            except RateError as e:
                rows.append(CheckRow(c.name, "FAIL", math.nan, c.bound, note=str(e)))
                continue
            ok = est.slope < c.bound and est.r_squared >= c.min_r2
            rows.append(CheckRow(c.name, "PASS" if ok else "FAIL", est.factor, 1.0, est.r_squared,
                                 "geometric factor"))
            continue
        try:
            est = estimate_rate(tr, c.column, c.model, window=c.window)
        except RateError as e:
            rows.append(CheckRow(c.name, "FAIL", math.nan, c.bound, note=str(e)))
            continue
        ok = est.slope <= c.bound and est.r_squared >= c.min_r2
        rows.append(CheckRow(c.name, "PASS" if ok else "FAIL", est.slope, c.bound, est.r_squared, "log-log slope"))
    return rows


def format_report(rows: Sequence[CheckRow]) -> str:
    lines = [f"{'check':36s} {'status':8s} {'measured':>10s} {'bound':>8s} {'r2':>6s}"]
    for r in rows:
        lines.append(f"{r.name:36s} {r.status:8s} {r.measured:10.4g} {r.bound:8.3g} {r.r_squared:6.3f}  {r.note}")
    return "\n".join(lines)


def trace_key(cfg: ExperimentConfig) -> str:
    """Key used by DEFAULT_CHECKS: problem-algorithm-schedule."""
    return f"{cfg.problem}-{cfg.algorithm}-{cfg.schedule}"
