"""Sequential proximal splitting algorithms with varying stepsizes.

Every algorithm is a pure step function ``step(state, bundle, g0, g1)`` where
``g0 = gamma_k`` and ``g1 = gamma_{k+1}``. The update formulas follow the
nonstationary forms exactly, including the ratios gamma_{k+1}/gamma_k.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .operators import (
    LinearMap,
    ParameterError,
    ProxTerm,
    SmoothTerm,
    power_iteration_norm_sq,
    prox_conjugate,
)
from .schedules import Schedule

log = logging.getLogger(__name__)

Array = np.ndarray


class DivergenceError(RuntimeError):
    def __init__(self, k: int, trace=None):
        super().__init__(f"non-finite iterate at iteration {k}")
        self.k = k
        self.trace = trace if trace is not None else []


# ---------------------------------------------------------------------------
# Problem description


@dataclass
class TermBundle:
    """Psi(x) = F(x) + R(x) + H(Kx) on R^n. Absent terms are zero, absent K is I."""

    n: int
    F: Optional[SmoothTerm] = None
    R: Optional[ProxTerm] = None
    H: Optional[ProxTerm] = None
    K: Optional[LinearMap] = None
    eta: Optional[float] = None

    def __post_init__(self):
        if self.K is not None and self.K.in_dim != self.n:
            raise ParameterError("K input dimension does not match n")
        if self.eta is None:
            if self.K is None:
                self.eta = 1.0
            else:
                self.eta = max(self.K_norm_sq, 1e-300)
        elif not self.eta > 0:
            raise ParameterError("eta must be positive")
        elif self.K is not None and self.eta < self.K.norm_sq * (1 - 1e-12) and math.isfinite(self.K.norm_sq):
            log.info("eta=%g below the certified bound %g of K", self.eta, self.K.norm_sq)

    @property
    def K_norm_sq(self) -> float:
        """||K||^2: the certified bound, tightened by a power estimate."""
        if self.K is None:
            return 1.0
        if not hasattr(self, "_K_norm_sq"):
            est = power_iteration_norm_sq(self.K)
            self._K_norm_sq = min(est, self.K.norm_sq) if math.isfinite(self.K.norm_sq) else est
        return self._K_norm_sq

    # shorthand used by the step functions
    @property
    def m(self) -> int:
        return self.n if self.K is None else self.K.out_dim

    @property
    def L_F(self) -> float:
        return 0.0 if self.F is None else self.F.L

    @property
    def mu_F(self) -> float:
        return 0.0 if self.F is None else self.F.mu

    @property
    def mu_R(self) -> float:
        return 0.0 if self.R is None else self.R.mu

    def grad(self, x: Array) -> Array:
        return np.zeros_like(x) if self.F is None else self.F.gradient(x)

    def prox_R(self, g: float, z: Array) -> Array:
        return z if self.R is None else self.R.prox(g, z)

    def prox_H(self, g: float, z: Array) -> Array:
        return z if self.H is None else self.H.prox(g, z)

    def prox_Hc(self, tau: float, z: Array) -> Array:
        """prox_{H*/tau}(z)."""
        return np.zeros_like(z) if self.H is None else prox_conjugate(self.H, tau, z)

    def Kx(self, x: Array) -> Array:
        return x if self.K is None else self.K.apply(x)

    def Kt(self, u: Array) -> Array:
        return u if self.K is None else self.K.adjoint(u)

    def objective(self, x: Array) -> tuple[float, bool]:
        """Finite part of Psi(x) and whether every term was finite."""
        total, feasible = 0.0, True
        parts = [
            0.0 if self.F is None else self.F.value(x),
            0.0 if self.R is None else self.R.value(x),
            0.0 if self.H is None else self.H.value(self.Kx(x)),
        ]
        for v in parts:
            if math.isfinite(v):
                total += v
            else:
                feasible = False
        return total, feasible


@dataclass(frozen=True)
class SolverState:
    algorithm: str
    k: int
    vars: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.vars[key]

    def advance(self, **updates) -> "SolverState":
        v = dict(self.vars)
        v.update(updates)
        return SolverState(self.algorithm, self.k + 1, v)


@dataclass(frozen=True)
class StoppingRule:
    """Stop at ``max_iter``, or once the relative change of x drops below ``tol``
    (checked only after ``min_iter`` iterations), or after ``wall_limit_ms``."""

    max_iter: int = 1000
    tol: float = 0.0
    min_iter: int = 0
    wall_limit_ms: Optional[float] = None


# ---------------------------------------------------------------------------
# Step functions


def davis_yin_step(state: SolverState, b: TermBundle, g0: float, g1: float) -> SolverState:
    if b.K is not None:
        raise ParameterError("Davis-Yin requires K = I")
    xH, u = state["x_H"], state["u"]
    x = b.prox_R(g0, xH + g0 * u)
    u = u + (xH - x) / g0
    xH = b.prox_H(g1, x - g1 * u - g1 * b.grad(x))
    return state.advance(x=x, x_H=xH, u=u)


def pd3o_step(state: SolverState, b: TermBundle, g0: float, g1: float) -> SolverState:
    q, u = state["q"], state["u"]
    x = b.prox_R(g0, g0 * (q - b.Kt(u)))
    q_new = x / g1 - b.grad(x)
    u = b.prox_Hc(g1 * b.eta, u + b.Kx(x / g0 + q_new - q) / b.eta)
    return state.advance(x=x, q=q_new, u=u)


def pddy_step(state: SolverState, b: TermBundle, g0: float, g1: float) -> SolverState:
    xR, u, p = state["x_R"], state["u"], state["p"]
    u = b.prox_Hc(g0 * b.eta, u + b.Kx(xR) / (g0 * b.eta))
    p_new = b.Kt(u)
    x = xR - g0 * (p_new - p)
    xR = b.prox_R(g1, x - g1 * b.grad(x) - g1 * p_new)
    return state.advance(x_R=xR, u=u, p=p_new, x=x)


def chambolle_pock_i_step(state: SolverState, b: TermBundle, g0: float, g1: float) -> SolverState:
    x, u = state["x"], state["u"]
    x_new = b.prox_R(g0, x - g0 * b.Kt(u))
    u = b.prox_Hc(g1 * b.eta, u + b.Kx((1 / g1 + 1 / g0) * x_new - x / g0) / b.eta)
    return state.advance(x=x_new, u=u)


def chambolle_pock_ii_step(state: SolverState, b: TermBundle, g0: float, g1: float) -> SolverState:
    xR, u = state["x_R"], state["u"]
    u_new = b.prox_Hc(g0 * b.eta, u + b.Kx(xR) / (g0 * b.eta))
    xR = b.prox_R(g1, xR - b.Kt((g0 + g1) * u_new - g0 * u))
    return state.advance(x_R=xR, u=u_new)


def loris_verhoeven_step(state: SolverState, b: TermBundle, g0: float, g1: float) -> SolverState:
    q, u = state["q"], state["u"]
    x = g0 * (q - b.Kt(u))
    q_new = x / g1 - b.grad(x)
    u = b.prox_Hc(g1 * b.eta, u + b.Kx(x / g0 + q_new - q) / b.eta)
    return state.advance(x=x, q=q_new, u=u)


def douglas_rachford_step(state: SolverState, b: TermBundle, g0: float, g1: float) -> SolverState:
    if b.K is not None:
        raise ParameterError("Douglas-Rachford requires K = I")
    s = state["s"]
    r = g1 / g0
    x = b.prox_R(g0, s)
    xH = b.prox_H(g1, (1 + r) * x - r * s)
    s = xH + r * (s - x)
    return state.advance(x=x, x_H=xH, s=s)


def forward_backward_step(state: SolverState, b: TermBundle, g0: float, g1: float) -> SolverState:
    x = state["x"]
    return state.advance(x=b.prox_R(g0, x - g0 * b.grad(x)))


def condat_vu_step(state: SolverState, b: TermBundle, gamma: float, sigma: float, form: str = "I") -> SolverState:
    if not (gamma > 0 and sigma > 0):
        raise ParameterError("Condat-Vu needs gamma > 0 and sigma > 0")
    x, u = state["x"], state["u"]
    if form == "I":
        x_new = b.prox_R(gamma, x - gamma * (b.Kt(u) + b.grad(x)))
        u = b.prox_Hc(1 / sigma, u + sigma * b.Kx(2 * x_new - x))
        return state.advance(x=x_new, u=u)
    if form == "II":
        u_new = b.prox_Hc(1 / sigma, u + sigma * b.Kx(x))
        x = b.prox_R(gamma, x - gamma * (b.Kt(2 * u_new - u) + b.grad(x)))
        return state.advance(x=x, u=u_new)
    raise ParameterError(f"unknown Condat-Vu form {form!r}")


def check_condat_vu(b: TermBundle, gamma: float, sigma: float) -> float:
    """Return gamma (sigma ||K||^2 + L_F / 2); warns when it is not < 1."""
    val = gamma * (sigma * b.K_norm_sq + b.L_F / 2)
    if not val < 1:
        warnings.warn(f"Condat-Vu condition violated: gamma(sigma ||K||^2 + L/2) = {val:.4g} >= 1", stacklevel=2)
    return val


STEPS: dict[str, Callable] = {
    "davis_yin": davis_yin_step,
    "pd3o": pd3o_step,
    "pddy": pddy_step,
    "chambolle_pock_i": chambolle_pock_i_step,
    "chambolle_pock_ii": chambolle_pock_ii_step,
    "loris_verhoeven": loris_verhoeven_step,
    "douglas_rachford": douglas_rachford_step,
    "forward_backward": forward_backward_step,
    "condat_vu_i": lambda s, b, g0, g1, sigma: condat_vu_step(s, b, g0, sigma, "I"),
    "condat_vu_ii": lambda s, b, g0, g1, sigma: condat_vu_step(s, b, g0, sigma, "II"),
}

# terms that must be absent for the reduced algorithms
REQUIRES_ABSENT = {
    "davis_yin": ("K",),
    "douglas_rachford": ("K", "F"),
    "chambolle_pock_i": ("F",),
    "chambolle_pock_ii": ("F",),
    "loris_verhoeven": ("R",),
    "forward_backward": ("H", "K"),
}


def check_applicable(algorithm: str, b: TermBundle) -> None:
    for name in REQUIRES_ABSENT.get(algorithm, ()):
        if getattr(b, name) is not None:
            raise ParameterError(f"{algorithm} requires {name} to be absent")


# variable reported as "the" primal iterate of each algorithm
PRIMAL = {
    "davis_yin": "x",
    "pd3o": "x",
    "pddy": "x_R",
    "chambolle_pock_i": "x",
    "chambolle_pock_ii": "x_R",
    "loris_verhoeven": "x",
    "douglas_rachford": "x",
    "forward_backward": "x",
    "condat_vu_i": "x",
    "condat_vu_ii": "x",
}


def init_state(algorithm: str, b: TermBundle, x0: Array, gamma0: float, u0: Optional[Array] = None) -> SolverState:
    """Start from primal estimate x0 and dual u0 (zero by default)."""
    x0 = np.asarray(x0, dtype=float)
    u0 = np.zeros(b.m) if u0 is None else np.asarray(u0, dtype=float)
    if algorithm == "davis_yin":
        v = dict(x=x0, x_H=x0, u=np.zeros(b.n))
    elif algorithm in ("pd3o", "loris_verhoeven"):
        v = dict(x=x0, q=x0 / gamma0 - b.grad(x0), u=u0)
    elif algorithm == "pddy":
        v = dict(x_R=x0, u=u0, p=b.Kt(u0), x=x0)
    elif algorithm == "chambolle_pock_ii":
        v = dict(x_R=x0, u=u0)
    elif algorithm == "douglas_rachford":
        v = dict(x=x0, x_H=x0, s=x0)
    elif algorithm == "forward_backward":
        v = dict(x=x0)
    elif algorithm in ("chambolle_pock_i", "condat_vu_i", "condat_vu_ii"):
        v = dict(x=x0, u=u0)
    else:
        raise ParameterError(f"unknown algorithm {algorithm!r}")
    return SolverState(algorithm, 0, v)


# ---------------------------------------------------------------------------
# Running


class ErgodicAverage:
    """Running value of (2 / (k (k+1))) sum_{i=1..k} i x^i."""

    def __init__(self):
        self.k = 0
        self.value: Optional[Array] = None

    def update(self, x: Array) -> Array:
        self.k += 1
        if self.value is None:
            self.value = np.array(x, dtype=float)
        else:
            self.value = ((self.k - 1) * self.value + 2 * x) / (self.k + 1)
        return self.value


def ergodic_average(iterates) -> Array:
    avg = ErgodicAverage()
    for x in iterates:
        avg.update(x)
    if avg.value is None:
        raise ValueError("ergodic average of an empty sequence")
    return avg.value


@dataclass
class TraceRecord:
    k: int
    gamma_k: float
    psi_gap: float = math.nan
    dist_sq: float = math.nan
    ergodic_gap: float = math.nan
    wall_ms: float = 0.0
    msgs: int = 0
    bytes: int = 0
    feasible: bool = True


COLUMNS = ("k", "gamma_k", "psi_gap", "dist_sq", "ergodic_gap", "wall_ms", "msgs", "bytes", "feasible")


@dataclass
class Probe:
    """Diagnostics computed at recorded iterations.

    ``objective`` returns (finite part of Psi, feasible flag).
    """

    objective: Callable[[Array], tuple[float, bool]]
    x_ref: Optional[Array] = None
    psi_ref: Optional[float] = None
    ergodic: bool = True
    every: int = 1

    def wants(self, k: int) -> bool:
        return k == 1 or k % self.every == 0

    def record(self, k: int, gamma_k: float, x: Array, xbar: Optional[Array]) -> TraceRecord:
        rec = TraceRecord(k=k, gamma_k=gamma_k)
        val, feas = self.objective(x)
        rec.feasible = feas
        if self.psi_ref is not None:
            rec.psi_gap = val - self.psi_ref
            if self.ergodic and xbar is not None:
                rec.ergodic_gap = self.objective(xbar)[0] - self.psi_ref
        if self.x_ref is not None:
            d = x - self.x_ref
            rec.dist_sq = float(d @ d)
        return rec


@dataclass
class RunResult:
    trace: list
    state: object
    iterations: int


def _finite(state) -> bool:
    return all(np.all(np.isfinite(v)) for v in state.vars.values())


def run(
    algorithm: str,
    bundle: TermBundle,
    schedule: Schedule,
    stopping: StoppingRule,
    x0: Optional[Array] = None,
    state: Optional[SolverState] = None,
    probe: Optional[Probe] = None,
    sigma: Optional[float] = None,
    primal: Optional[str] = None,
    timing: bool = False,
    callback: Optional[Callable[[SolverState], None]] = None,
) -> RunResult:
    """Iterate ``algorithm`` until the stopping rule fires.

    Record k holds x^k together with gamma_k. Condat-Vu uses the constant
    gamma0 of the schedule and ``sigma`` (default 1 / (eta gamma)).
    """
    if algorithm not in STEPS:
        raise ParameterError(f"unknown algorithm {algorithm!r}")
    check_applicable(algorithm, bundle)
    if state is None:
        if x0 is None:
            x0 = np.zeros(bundle.n)
        state = init_state(algorithm, bundle, x0, schedule.gamma0)
    is_cv = algorithm.startswith("condat_vu")
    if is_cv:
        if schedule.kind != "constant":
            raise ParameterError("Condat-Vu is only available with constant stepsizes")
        if sigma is None:
            sigma = 1.0 / (bundle.eta * schedule.gamma0)
        check_condat_vu(bundle, schedule.gamma0, sigma)
    else:
        schedule.validate(bundle.L_F)
    step = STEPS[algorithm]
    key = primal or PRIMAL[algorithm]
    trace: list[TraceRecord] = []
    avg = ErgodicAverage() if probe is not None and probe.ergodic else None
    gammas = iter(schedule)
    g0 = next(gammas)
    t0 = time.perf_counter()
    k = 0
    while k < stopping.max_iter:
        g1 = next(gammas)
        x_old = state[key]
        state = step(state, bundle, g0, g1, sigma) if is_cv else step(state, bundle, g0, g1)
        k += 1
        if not _finite(state):
            raise DivergenceError(k, trace)
        x = state[key]
        xbar = avg.update(x) if avg is not None else None
        if callback is not None:
            callback(state)
        elapsed = (time.perf_counter() - t0) * 1e3
        if probe is not None and probe.wants(k):
            rec = probe.record(k, g1, x, xbar)
            rec.wall_ms = elapsed if timing else 0.0
            trace.append(rec)
        g0 = g1
        if stopping.tol > 0 and k >= stopping.min_iter:
            change = np.linalg.norm(x - x_old) / (np.linalg.norm(x_old) + 1e-300)
            if change < stopping.tol:
                break
        if stopping.wall_limit_ms is not None and elapsed > stopping.wall_limit_ms:
            break
    return RunResult(trace, state, k)


# ---------------------------------------------------------------------------
# Constants from the accelerated and linear convergence bounds


def _sq(v: Array) -> float:
    return float(v @ v)


def c0_pd3o(b: TermBundle, gamma0: float, kappa: float, q0, u0, x1, x_star, u_star) -> float:
    """Constant of the accelerated PD3O bound ||x^{k+1}-x*||^2 <= gamma_{k+1}^2 c0 / (1 - gamma_{k+1} mu_F kappa)."""
    du = u0 - u_star
    Ktdu = b.Kt(du)
    return (
        (1 - gamma0 * b.mu_F * kappa) / gamma0**2 * _sq(x1 - x_star)
        + _sq(q0 - x1 / gamma0 - Ktdu + b.grad(x_star))
        + b.eta * _sq(du)
        - _sq(Ktdu)
    )


def c0_pddy(b: TermBundle, gamma0: float, kappa: float, u0, u1, x1, x_star, u_star) -> float:
    d = u1 - u0
    return (1 - gamma0 * b.mu_F * kappa) / gamma0**2 * (
        _sq(x1 - x_star) + gamma0**2 * b.eta * _sq(d) - gamma0**2 * _sq(b.Kt(d))
    ) + b.eta * _sq(u1 - u_star)


def c0_chambolle_pock_i(b: TermBundle, gamma0: float, x0, u0, x1, x_star, u_star) -> float:
    du = u0 - u_star
    Ktdu = b.Kt(du)
    return _sq(x1 - x_star) / gamma0**2 + _sq((x0 - x1) / gamma0 - Ktdu) + b.eta * _sq(du) - _sq(Ktdu)


def c0_davis_yin(b: TermBundle, gamma0: float, kappa: float, s0, x1, x_star, u_star) -> float:
    """Davis-Yin / Douglas-Rachford constant; u_star is the dual attached to H."""
    return (1 - gamma0 * b.mu_F * kappa) / gamma0**2 * _sq(x1 - x_star) + _sq(
        (s0 - x1) / gamma0 + u_star + b.grad(x_star)
    )


def accel_bound(c0: float, gamma: float, mu_F: float, kappa: float) -> float:
    return gamma**2 / (1 - gamma * mu_F * kappa) * c0


def rho_lower_pddy(gamma: float, mu_F: float, L_F: float, eta: float, L_H: float) -> float:
    """Loose lower bound on the linear rate of PDDY / Loris-Verhoeven (reference only)."""
    return gamma * mu_F * (2 - gamma * L_F) / (1 + gamma * eta * L_H) ** 2
