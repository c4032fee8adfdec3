"""Master/worker versions of the splitting algorithms on a weighted product space.

The problem is  R(x) + (1/M) sum_m F_m(x) + H_m(K_m x).  Node m owns F_m, H_m
and K_m; the master owns R. A round exchanges one broadcast and M reduce
messages. Reductions run in ascending node order so results do not depend on
how worker computations are scheduled.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Literal, Optional, Sequence

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
from .solvers import DivergenceError, ErgodicAverage, Probe, RunResult, StoppingRule

log = logging.getLogger(__name__)

Array = np.ndarray


@dataclass
class NodeSpec:
    F: Optional[SmoothTerm] = None
    H: Optional[ProxTerm] = None
    K: Optional[LinearMap] = None
    omega: Optional[float] = None

    @property
    def L(self) -> float:
        return 0.0 if self.F is None else self.F.L

    @property
    def K_norm_sq(self) -> float:
        return 1.0 if self.K is None else self.K.norm_sq


def weight_preset(nodes: Sequence[NodeSpec], preset: str = "uniform") -> Array:
    """Node weights: "uniform", "inv_norm" (1/||K_m||^2) or "lipschitz" (L_{F_m}^2)."""
    M = len(nodes)
    if preset == "uniform":
        w = np.ones(M)
    elif preset == "inv_norm":
        w = np.array([1.0 / nd.K_norm_sq if nd.K_norm_sq > 0 else 1.0 for nd in nodes])
    elif preset == "lipschitz":
        w = np.array([nd.L**2 for nd in nodes])
        if not np.all(w > 0):
            w = np.ones(M)
    else:
        raise ParameterError(f"unknown weight preset {preset!r}")
    return w / w.sum()


def compute_L_hat(nodes: Sequence[NodeSpec], family: str = "pd3o_like", omegas=None) -> float:
    M = len(nodes)
    om = np.array([nd.omega for nd in nodes]) if omegas is None else np.asarray(omegas, dtype=float)
    L = np.array([nd.L for nd in nodes])
    if family in ("pd3o_like", "condat_vu"):
        return float(np.sqrt(np.sum(L**2 / om)) / M)
    if family == "pddy_like":
        return float(np.max(L / (M * om)))
    raise ParameterError(f"unknown family {family!r}")


def compute_K_hat_norm_sq(
    nodes: Sequence[NodeSpec], family: str = "pd3o_like", F_all_zero_or_shared: bool = False, omegas=None
) -> float:
    """||K_hat||^2: max_m ||K_m||^2, or ||sum_m w_m K_m*K_m|| when the norm may be restricted
    to the consensus subspace (identical F_m, all F_m zero, or Condat-Vu)."""
    om = np.array([nd.omega for nd in nodes]) if omegas is None else np.asarray(omegas, dtype=float)
    restricted = family == "condat_vu" or F_all_zero_or_shared
    if family not in ("pd3o_like", "pddy_like", "condat_vu"):
        raise ParameterError(f"unknown family {family!r}")
    if not restricted:
        return float(max(nd.K_norm_sq for nd in nodes))
    upper = float(np.sum(om * np.array([nd.K_norm_sq for nd in nodes])))
    if all(nd.K is None for nd in nodes):
        return upper
    n = next(nd.K.in_dim for nd in nodes if nd.K is not None)

    def gram(x):
        acc = np.zeros(n)
        for w, nd in zip(om, nodes):
            acc += w * (x if nd.K is None else nd.K.adjoint(nd.K.apply(x)))
        return acc

    # symmetric PSD map written as a LinearMap with K = (sum w K*K)^{1/2} semantics:
    # power iteration on G with apply = G and adjoint = I estimates ||G||
    G = LinearMap(n, n, gram, lambda x: x, upper, "sumKK")
    est = power_iteration_norm_sq(G, tol=1e-12, max_iter=5000)
    return min(est, upper)


FAMILY = {
    "pd3o": "pd3o_like",
    "loris_verhoeven": "pd3o_like",
    "davis_yin": "pd3o_like",
    "chambolle_pock_i": "pd3o_like",
    "douglas_rachford": "pd3o_like",
    "forward_backward": "pd3o_like",
    "pddy": "pddy_like",
    "chambolle_pock_ii": "pddy_like",
    "condat_vu_i": "condat_vu",
    "condat_vu_ii": "condat_vu",
}


@dataclass
class LiftedProblem:
    """Nodes with normalized weights, the master term R and the derived constants."""

    n: int
    nodes: list
    R: Optional[ProxTerm] = None
    family: str = "pd3o_like"
    shared_F: Optional[bool] = None
    mu_F_hat: float = 0.0
    eta: Optional[float] = None
    weights: str = "uniform"

    def __post_init__(self):
        if not self.nodes:
            raise ParameterError("at least one node is required")
        given = [nd.omega for nd in self.nodes]
        if all(w is None for w in given):
            om = weight_preset(self.nodes, self.weights)
        elif any(w is None for w in given):
            raise ParameterError("either all or none of the node weights must be given")
        else:
            raw = np.array(given, dtype=float)
            if np.any(raw <= 0):
                raise ParameterError("node weights must be positive")
            om = raw / raw.sum()
            if np.max(np.abs(om - raw)) > 1e-12:
                warnings.warn("node weights renormalized to sum to 1", stacklevel=2)
        for nd, w in zip(self.nodes, om):
            nd.omega = float(w)
        if self.shared_F is None:
            Fs = [nd.F for nd in self.nodes]
            self.shared_F = all(F is None for F in Fs) or all(F is Fs[0] for F in Fs)
        if self.eta is None:
            self.eta = compute_K_hat_norm_sq(self.nodes, self.family, self.shared_F)
        self.L_hat = compute_L_hat(self.nodes, self.family)
        self.K_hat_norm_sq = compute_K_hat_norm_sq(self.nodes, self.family, self.shared_F)

    @property
    def M(self) -> int:
        return len(self.nodes)

    @property
    def omegas(self) -> Array:
        return np.array([nd.omega for nd in self.nodes])

    @property
    def mu_R(self) -> float:
        return 0.0 if self.R is None else self.R.mu

    def objective(self, x: Array) -> tuple[float, bool]:
        total, feasible = 0.0, True
        parts = [0.0 if self.R is None else self.R.value(x)]
        node_sum = 0.0
        for nd in self.nodes:
            f = 0.0 if nd.F is None else nd.F.value(x)
            h = 0.0 if nd.H is None else nd.H.value(x if nd.K is None else nd.K.apply(x))
            for v in (f, h):
                if math.isfinite(v):
                    node_sum += v
                else:
                    feasible = False
        parts.append(node_sum / self.M)
        for v in parts:
            if math.isfinite(v):
                total += v
            else:
                feasible = False
        return total, feasible


@dataclass(frozen=True)
class RoundMessage:
    direction: Literal["broadcast", "reduce"]
    payload: Array
    round: int
    node: Optional[int] = None


@dataclass
class DistState:
    algorithm: str
    k: int
    master: dict
    nodes: list  # one dict per node

    def primal(self) -> Array:
        return self.master["x"]


# ---------------------------------------------------------------------------
# Per-node helpers


def _grad(nd: NodeSpec, x: Array) -> Array:
    return np.zeros_like(x) if nd.F is None else nd.F.gradient(x)


def _K(nd: NodeSpec, x: Array) -> Array:
    return x if nd.K is None else nd.K.apply(x)


def _Kt(nd: NodeSpec, u: Array) -> Array:
    return u if nd.K is None else nd.K.adjoint(u)


def _prox_Hc(nd: NodeSpec, tau: float, z: Array) -> Array:
    return np.zeros_like(z) if nd.H is None else prox_conjugate(nd.H, tau, z)


def _prox_H(nd: NodeSpec, g: float, z: Array) -> Array:
    return z if nd.H is None else nd.H.prox(g, z)


def _prox_R(lp: LiftedProblem, g: float, z: Array) -> Array:
    return z if lp.R is None else lp.R.prox(g, z)


def _dual_dim(nd: NodeSpec, n: int) -> int:
    return n if nd.K is None else nd.K.out_dim


def _ordered_sum(payloads: Sequence[Array], weights=None) -> Array:
    acc = np.array(payloads[0], dtype=float) * (1.0 if weights is None else weights[0])
    for i in range(1, len(payloads)):
        acc = acc + (payloads[i] if weights is None else weights[i] * payloads[i])
    return acc


# ---------------------------------------------------------------------------
# Algorithm definitions
#
# worker(lp, nd, c, ns, bcast, p) -> (new node state, payload) with c = M omega_m
# master(lp, ms, inbox, p) -> (new master state, broadcast payload)
# p holds g0 = gamma_k, g1 = gamma_{k+1}, sigma and eta.


def _w_pd3o(lp, nd, c, ns, x, p):
    g0, g1, eta = p["g0"], p["g1"], lp.eta
    q = (c / g1) * x - _grad(nd, x)
    u = _prox_Hc(nd, g1 * eta / c, ns["u"] + _K(nd, (c / g0) * x + q - ns["q"]) / eta)
    return dict(q=q, u=u), q - _Kt(nd, u)


def _m_pd3o(lp, ms, inbox, p):
    x = _prox_R(lp, p["g0"], (p["g0"] / lp.M) * _ordered_sum(inbox))
    return dict(x=x), x


def _m_lv(lp, ms, inbox, p):
    x = (p["g0"] / lp.M) * _ordered_sum(inbox)
    return dict(x=x), x


def _w_dy(lp, nd, c, ns, x, p):
    g0, g1 = p["g0"], p["g1"]
    r = g1 / g0
    s = ns["s"]
    xm = _prox_H(nd, g1 / c, (1 + r) * x - r * s - (g1 / c) * _grad(nd, x))
    s = xm + r * (s - x)
    return dict(s=s, x_m=xm), s


def _m_dy(lp, ms, inbox, p):
    x = _prox_R(lp, p["g0"], _ordered_sum(inbox, lp.omegas))
    return dict(x=x), x


def _w_cp1(lp, nd, c, ns, x, p):
    g0, g1, eta = p["g0"], p["g1"], lp.eta
    u = _prox_Hc(nd, g1 * eta / c, ns["u"] + (c / eta) * _K(nd, (1 / g0 + 1 / g1) * x - ns["x_prev"] / g0))
    return dict(u=u, x_prev=x), _Kt(nd, u)


def _m_cp1(lp, ms, inbox, p):
    x = _prox_R(lp, p["g0"], ms["x"] - (p["g0"] / lp.M) * _ordered_sum(inbox))
    return dict(x=x), x


def _w_cv1(lp, nd, c, ns, x, p):
    sig = p["sigma"]
    u = _prox_Hc(nd, 1 / (c * sig), ns["u"] + c * sig * _K(nd, 2 * x - ns["x_prev"]))
    return dict(u=u, x_prev=x), _Kt(nd, u) + _grad(nd, x)


def _m_cv(lp, ms, inbox, p):
    g = p["g0"]
    x = _prox_R(lp, g, ms["x"] - (g / lp.M) * _ordered_sum(inbox))
    return dict(x=x), x


def _w_pddy(lp, nd, c, ns, xR, p):
    g0, g1, eta = p["g0"], p["g1"], lp.eta
    u = _prox_Hc(nd, g0 * eta / c, ns["u"] + (c / (g0 * eta)) * _K(nd, xR))
    pk = _Kt(nd, u)
    xm = xR - (g0 / c) * (pk - ns["p"])
    a = c * xm - g1 * _grad(nd, xm) - g1 * pk
    return dict(u=u, p=pk, x_m=xm), a


def _m_pddy(lp, ms, inbox, p):
    x = _prox_R(lp, p["g1"], _ordered_sum(inbox) / lp.M)
    return dict(x=x), x


def _w_cp2(lp, nd, c, ns, xR, p):
    g0, g1, eta = p["g0"], p["g1"], lp.eta
    u = _prox_Hc(nd, g0 * eta / c, ns["u"] + (c / (g0 * eta)) * _K(nd, xR))
    a = c * xR - _Kt(nd, (g0 + g1) * u - g0 * ns["u"])
    return dict(u=u), a


def _w_fb(lp, nd, c, ns, x, p):
    return ns, _grad(nd, x)


def _w_cv2(lp, nd, c, ns, x, p):
    sig = p["sigma"]
    u = _prox_Hc(nd, 1 / (c * sig), ns["u"] + c * sig * _K(nd, x))
    return dict(u=u), _Kt(nd, 2 * u - ns["u"]) + _grad(nd, x)


@dataclass(frozen=True)
class DistAlgorithm:
    name: str
    order: Literal["master_first", "workers_first"]
    worker: Callable
    master: Callable


ALGORITHMS = {
    a.name: a
    for a in [
        DistAlgorithm("pd3o", "master_first", _w_pd3o, _m_pd3o),
        DistAlgorithm("loris_verhoeven", "master_first", _w_pd3o, _m_lv),
        DistAlgorithm("davis_yin", "master_first", _w_dy, _m_dy),
        DistAlgorithm("douglas_rachford", "master_first", _w_dy, _m_dy),
        DistAlgorithm("chambolle_pock_i", "master_first", _w_cp1, _m_cp1),
        DistAlgorithm("condat_vu_i", "master_first", _w_cv1, _m_cv),
        DistAlgorithm("pddy", "workers_first", _w_pddy, _m_pddy),
        DistAlgorithm("chambolle_pock_ii", "workers_first", _w_cp2, _m_pddy),
        DistAlgorithm("forward_backward", "workers_first", _w_fb, _m_cv),
        DistAlgorithm("condat_vu_ii", "workers_first", _w_cv2, _m_cv),
    ]
}


def init_dist_state(algorithm: str, lp: LiftedProblem, x0: Array, gamma0: float, u0=None) -> DistState:
    """Standard start: every node sees x0, duals zero unless ``u0`` (list per node) is given."""
    if algorithm not in ALGORITHMS:
        raise ParameterError(f"unknown distributed algorithm {algorithm!r}")
    if algorithm in ("davis_yin", "douglas_rachford") and any(nd.K is not None for nd in lp.nodes):
        raise ParameterError(f"{algorithm} requires K_m = I on every node")
    if algorithm == "douglas_rachford" and any(nd.F is not None for nd in lp.nodes):
        raise ParameterError("douglas_rachford requires F_m = 0 on every node")
    x0 = np.asarray(x0, dtype=float)
    M = lp.M
    us = [np.zeros(_dual_dim(nd, lp.n)) if u0 is None else np.asarray(u0[m], float) for m, nd in enumerate(lp.nodes)]
    nodes, inbox = [], None
    cs = M * lp.omegas
    if algorithm in ("pd3o", "loris_verhoeven"):
        for nd, c, u in zip(lp.nodes, cs, us):
            q = (c / gamma0) * x0 - _grad(nd, x0)
            nodes.append(dict(q=q, u=u))
        inbox = [ns["q"] - _Kt(nd, ns["u"]) for ns, nd in zip(nodes, lp.nodes)]
    elif algorithm in ("davis_yin", "douglas_rachford"):
        nodes = [dict(s=x0.copy(), x_m=x0.copy()) for _ in lp.nodes]
        inbox = [ns["s"] for ns in nodes]
    elif algorithm == "chambolle_pock_i":
        nodes = [dict(u=u, x_prev=x0) for u in us]
        inbox = [_Kt(nd, u) for nd, u in zip(lp.nodes, us)]
    elif algorithm == "condat_vu_i":
        nodes = [dict(u=u, x_prev=x0) for u in us]
        inbox = [_Kt(nd, u) + _grad(nd, x0) for nd, u in zip(lp.nodes, us)]
    elif algorithm == "pddy":
        nodes = [dict(u=u, p=_Kt(nd, u), x_m=x0) for nd, u in zip(lp.nodes, us)]
    elif algorithm in ("chambolle_pock_ii", "condat_vu_ii"):
        nodes = [dict(u=u) for u in us]
    elif algorithm == "forward_backward":
        nodes = [dict() for _ in lp.nodes]
    master = dict(x=x0, inbox=inbox)
    return DistState(algorithm, 0, master, nodes)


def distributed_round(
    algorithm: str,
    lp: LiftedProblem,
    state: DistState,
    g0: float,
    g1: float,
    sigma: Optional[float] = None,
    pool: Optional[ThreadPoolExecutor] = None,
) -> tuple[DistState, list]:
    """One master + workers round; returns the new state and the round's messages."""
    alg = ALGORITHMS[algorithm]
    if len(state.nodes) != lp.M:
        raise ParameterError(f"state has {len(state.nodes)} nodes but the problem has {lp.M}")
    p = dict(g0=g0, g1=g1, sigma=sigma)
    cs = lp.M * lp.omegas
    k = state.k + 1
    msgs: list[RoundMessage] = []

    def work(bcast):
        def one(m):
            return alg.worker(lp, lp.nodes[m], cs[m], state.nodes[m], bcast, p)

        if pool is None:
            return [one(m) for m in range(lp.M)]
        return list(pool.map(one, range(lp.M)))

    if alg.order == "master_first":
        mnew, bcast = alg.master(lp, state.master, state.master["inbox"], p)
        msgs.append(RoundMessage("broadcast", bcast, k))
        results = work(bcast)
        payloads = [a for _, a in results]
        msgs.extend(RoundMessage("reduce", a, k, m) for m, a in enumerate(payloads))
        mnew["inbox"] = payloads
    else:
        results = work(state.master["x"])
        payloads = [a for _, a in results]
        msgs.extend(RoundMessage("reduce", a, k, m) for m, a in enumerate(payloads))
        mnew, bcast = alg.master(lp, state.master, payloads, p)
        msgs.append(RoundMessage("broadcast", bcast, k))
        mnew["inbox"] = None
    nodes = [ns for ns, _ in results]
    return DistState(algorithm, k, mnew, nodes), msgs


def condat_vu_distributed_round(form, lp, state, gamma, sigma, pool=None):
    return distributed_round(f"condat_vu_{form.lower()}", lp, state, gamma, gamma, sigma=sigma, pool=pool)


def check_condat_vu_distributed(lp: LiftedProblem, gamma: float, sigma: float) -> float:
    nsq = compute_K_hat_norm_sq(lp.nodes, "condat_vu", True)
    L = compute_L_hat(lp.nodes, "condat_vu")
    val = gamma * (sigma * nsq + L / 2)
    if not val < 1:
        warnings.warn(f"Condat-Vu condition violated: {val:.4g} >= 1", stacklevel=2)
    return val


def _finite(state: DistState) -> bool:
    if not np.all(np.isfinite(state.master["x"])):
        return False
    return all(np.all(np.isfinite(v)) for ns in state.nodes for v in ns.values())


def simulate(
    algorithm: str,
    lp: LiftedProblem,
    schedule: Schedule,
    stopping: StoppingRule,
    x0: Optional[Array] = None,
    mode: Literal["sequential", "parallel_workers"] = "sequential",
    probe: Optional[Probe] = None,
    sigma: Optional[float] = None,
    state: Optional[DistState] = None,
    workers: int = 4,
    timing: bool = False,
) -> RunResult:
    """Run rounds until the stopping rule fires; trace rows carry per-round message stats."""
    if algorithm not in ALGORITHMS:
        raise ParameterError(f"unknown distributed algorithm {algorithm!r}")
    if state is None:
        state = init_dist_state(algorithm, lp, np.zeros(lp.n) if x0 is None else x0, schedule.gamma0)
    is_cv = algorithm.startswith("condat_vu")
    if is_cv:
        if schedule.kind != "constant":
            raise ParameterError("Condat-Vu is only available with constant stepsizes")
        if sigma is None:
            sigma = 1.0 / (lp.eta * schedule.gamma0)
        check_condat_vu_distributed(lp, schedule.gamma0, sigma)
    else:
        schedule.validate(lp.L_hat)
    pool = ThreadPoolExecutor(max_workers=workers) if mode == "parallel_workers" else None
    trace = []
    avg = ErgodicAverage() if probe is not None and probe.ergodic else None
    gammas = iter(schedule)
    g0 = next(gammas)
    t0 = time.perf_counter()
    k = 0
    try:
        while k < stopping.max_iter:
            g1 = next(gammas)
            x_old = state.primal()
            state, msgs = distributed_round(algorithm, lp, state, g0, g1, sigma=sigma, pool=pool)
            k += 1
            if not _finite(state):
                raise DivergenceError(k, trace)
            x = state.primal()
            xbar = avg.update(x) if avg is not None else None
            elapsed = (time.perf_counter() - t0) * 1e3
            if probe is not None and probe.wants(k):
                rec = probe.record(k, g1, x, xbar)
                rec.msgs = len(msgs)
                rec.bytes = sum(m.payload.nbytes for m in msgs)
                rec.wall_ms = elapsed if timing else 0.0
                trace.append(rec)
            g0 = g1
            if stopping.tol > 0 and k >= stopping.min_iter:
                if np.linalg.norm(x - x_old) / (np.linalg.norm(x_old) + 1e-300) < stopping.tol:
                    break
            if stopping.wall_limit_ms is not None and elapsed > stopping.wall_limit_ms:
                break
    finally:
        if pool is not None:
            pool.shutdown()
    return RunResult(trace, state, k)
