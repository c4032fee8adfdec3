"""Linear maps, smooth terms, proximable terms and the checks run against them.

Vectors are flat float64 numpy arrays. A ``LinearMap`` records the dimensions
of its input and output spaces and refuses arrays of the wrong length.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Array = np.ndarray


class ParameterError(ValueError):
    """Raised for invalid algorithm or operator parameters."""


# ---------------------------------------------------------------------------
# Linear maps


@dataclass(frozen=True)
class LinearMap:
    """Linear operator K with its adjoint and a bound ``norm_sq >= ||K||^2``."""

    in_dim: int
    out_dim: int
    _apply: Callable[[Array], Array] = field(repr=False)
    _adjoint: Callable[[Array], Array] = field(repr=False)
    norm_sq: float = np.inf
    name: str = "K"

    def apply(self, x: Array) -> Array:
        if x.shape != (self.in_dim,):
            raise ValueError(f"{self.name}: expected input of shape ({self.in_dim},), got {x.shape}")
        return self._apply(x)

    def adjoint(self, u: Array) -> Array:
        if u.shape != (self.out_dim,):
            raise ValueError(f"{self.name}*: expected input of shape ({self.out_dim},), got {u.shape}")
        return self._adjoint(u)

    __call__ = apply

    @property
    def T(self) -> "LinearMap":
        return LinearMap(self.out_dim, self.in_dim, self._adjoint, self._apply, self.norm_sq, self.name + "*")

    def normal(self) -> "LinearMap":
        """K*K as a map on the input space."""
        return LinearMap(
            self.in_dim,
            self.in_dim,
            lambda x: self._adjoint(self._apply(x)),
            lambda x: self._adjoint(self._apply(x)),
            self.norm_sq**2,
            f"{self.name}*{self.name}",
        )


def identity(n: int) -> LinearMap:
    return LinearMap(n, n, lambda x: x.copy(), lambda u: u.copy(), 1.0, "I")


def diagonal(d) -> LinearMap:
    d = np.asarray(d, dtype=float)
    return LinearMap(d.size, d.size, lambda x: d * x, lambda u: d * u, float(np.max(d**2)), "diag")


def scaled_identity(n: int, c: float) -> LinearMap:
    c = float(c)
    return LinearMap(n, n, lambda x: c * x, lambda u: c * u, c * c, f"{c}I")


def matrix(A) -> LinearMap:
    """Dense matrix operator; the norm bound is the exact squared spectral norm."""
    A = np.asarray(A, dtype=float)
    ns = float(np.linalg.norm(A, 2) ** 2) if A.size else 0.0
    return LinearMap(A.shape[1], A.shape[0], lambda x: A @ x, lambda u: A.T @ u, ns, "A")


class CountingMap:
    """Wraps a LinearMap and counts forward and adjoint applications."""

    def __init__(self, op: LinearMap):
        self.op = op
        self.n_apply = 0
        self.n_adjoint = 0

    def _fwd(self, x):
        self.n_apply += 1
        return self.op.apply(x)

    def _adj(self, u):
        self.n_adjoint += 1
        return self.op.adjoint(u)

    def as_map(self) -> LinearMap:
        return LinearMap(self.op.in_dim, self.op.out_dim, self._fwd, self._adj, self.op.norm_sq, self.op.name)


def power_iteration_norm_sq(
    op: LinearMap, tol: float = 1e-10, max_iter: int = 1000, seed: int = 0, safety: float = 1.01
) -> float:
    """Estimate ||K||^2 by power iteration on K*K, times ``safety``.

    The Rayleigh quotient of K*K increases towards ||K||^2 from below, so the
    raw estimate is inflated by ``safety`` before being used as ``eta``.
    """
    if max_iter < 1:
        raise ParameterError("max_iter must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(op.in_dim)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(max_iter):
        y = op.adjoint(op.apply(x))
        new = float(x @ y)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
        if abs(new - est) <= tol * max(new, 1e-300):
            est = new
            break
        est = new
    return safety * est


def power_iteration_history(op: LinearMap, n_iter: int, seed: int = 0) -> np.ndarray:
    """Rayleigh quotients of K*K along the power iteration (for monotonicity checks)."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(op.in_dim)
    x /= np.linalg.norm(x)
    out = []
    for _ in range(n_iter):
        y = op.adjoint(op.apply(x))
        out.append(float(x @ y))
        ny = np.linalg.norm(y)
        if ny == 0.0:
            break
        x = y / ny
    return np.array(out)


def adjoint_check(op: LinearMap, trials: int = 10, seed: int = 0) -> float:
    """Max over random pairs of |<Kx,u> - <x,K*u>| / (||Kx|| ||u|| + eps)."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal(op.in_dim)
        u = rng.standard_normal(op.out_dim)
        Kx = op.apply(x)
        lhs = float(Kx @ u)
        rhs = float(x @ op.adjoint(u))
        worst = max(worst, abs(lhs - rhs) / (np.linalg.norm(Kx) * np.linalg.norm(u) + 1e-300))
    return worst


# ---------------------------------------------------------------------------
# Functions


@dataclass(frozen=True)
class SmoothTerm:
    """Convex L-smooth function with a strong convexity modulus ``mu``."""

    value: Callable[[Array], float]
    gradient: Callable[[Array], Array]
    L: float
    mu: float = 0.0
    name: str = "F"


@dataclass(frozen=True)
class ProxTerm:
    """Proper closed convex function known through its proximity operator.

    ``prox(gamma, z)`` returns argmin_x value(x) + ||x - z||^2 / (2 gamma).
    ``conj_prox(tau, z)``, when given, is a closed form of prox_{G*/tau}(z);
    otherwise ``prox_conjugate`` falls back to the Moreau identity.
    """

    value: Callable[[Array], float]
    prox: Callable[[float, Array], Array]
    mu: float = 0.0
    smooth_L: Optional[float] = None
    conj_prox: Optional[Callable[[float, Array], Array]] = field(default=None, repr=False)
    gradient: Optional[Callable[[Array], Array]] = field(default=None, repr=False)
    name: str = "G"


def prox_conjugate(term: ProxTerm, tau: float, z: Array) -> Array:
    """prox_{G*/tau}(z) = z - (1/tau) prox_{tau G}(tau z)."""
    if not tau > 0:
        raise ParameterError(f"prox_conjugate needs tau > 0, got {tau}")
    if term.conj_prox is not None:
        return term.conj_prox(tau, z)
    return z - term.prox(tau, tau * z) / tau


def grad_check(f: SmoothTerm, x: Array, h: float = 1e-5, max_coords: int = 50, seed: int = 0) -> float:
    """Max relative error between the gradient and central differences.

    At most ``max_coords`` coordinates, sampled without replacement, are tested.
    """
    if not h > 0:
        raise ParameterError("h must be positive")
    x = np.asarray(x, dtype=float)
    g = f.gradient(x)
    n = x.size
    idx = np.arange(n) if n <= max_coords else np.random.default_rng(seed).choice(n, max_coords, replace=False)
    scale = max(np.max(np.abs(g)), 1.0)
    worst = 0.0
    for i in idx:
        e = np.zeros(n)
        e[i] = h
        fd = (f.value(x + e) - f.value(x - e)) / (2 * h)
        worst = max(worst, abs(fd - g[i]) / scale)
    return worst


# ---------------------------------------------------------------------------
# Generic terms


def zero_smooth(n: int) -> SmoothTerm:
    return SmoothTerm(lambda x: 0.0, lambda x: np.zeros(n), 0.0, 0.0, "0")


def least_squares(A: LinearMap, y: Array, mu: Optional[float] = None) -> SmoothTerm:
    """F(x) = 0.5 ||Ax - y||^2 with L = ||A||^2."""
    y = np.asarray(y, dtype=float)

    def value(x):
        r = A.apply(x) - y
        return 0.5 * float(r @ r)

    def gradient(x):
        return A.adjoint(A.apply(x) - y)

    return SmoothTerm(value, gradient, float(A.norm_sq), 0.0 if mu is None else float(mu), "lsq")


def quadratic(Q, b=None, c: float = 0.0) -> SmoothTerm:
    """F(x) = 0.5 x'Qx - b'x + c for symmetric positive semidefinite Q."""
    Q = np.asarray(Q, dtype=float)
    b = np.zeros(Q.shape[0]) if b is None else np.asarray(b, dtype=float)
    ev = np.linalg.eigvalsh(Q)
    return SmoothTerm(
        lambda x: 0.5 * float(x @ Q @ x) - float(b @ x) + c,
        lambda x: Q @ x - b,
        float(ev[-1]),
        float(max(ev[0], 0.0)),
        "quad",
    )


def zero_prox() -> ProxTerm:
    return ProxTerm(
        lambda x: 0.0,
        lambda g, z: z.copy(),
        conj_prox=lambda t, z: np.zeros_like(z),
        smooth_L=0.0,
        gradient=lambda x: np.zeros_like(x),
        name="0",
    )


def nonneg() -> ProxTerm:
    """Indicator of the nonnegative orthant."""
    return ProxTerm(
        lambda x: 0.0 if np.all(x >= 0) else np.inf,
        lambda g, z: np.maximum(z, 0.0),
        conj_prox=lambda t, z: np.minimum(z, 0.0),
        name="nonneg",
    )


def l1(lam: float = 1.0, center=None) -> ProxTerm:
    """lam * ||x - center||_1."""
    lam = float(lam)
    c = None if center is None else np.asarray(center, dtype=float)

    def value(x):
        d = x if c is None else x - c
        return lam * float(np.sum(np.abs(d)))

    def prox(g, z):
        d = z if c is None else z - c
        out = np.sign(d) * np.maximum(np.abs(d) - g * lam, 0.0)
        return out if c is None else out + c

    def conj_prox(t, z):
        # G*(u) = <c,u> + indicator(|u| <= lam)
        shift = 0.0 if c is None else c / t
        return np.clip(z - shift, -lam, lam)

    return ProxTerm(value, prox, conj_prox=conj_prox, name="l1")


def linear(a) -> ProxTerm:
    a = np.asarray(a, dtype=float)
    return ProxTerm(
        lambda x: float(a @ x),
        lambda g, z: z - g * a,
        conj_prox=lambda t, z: a.copy(),
        smooth_L=0.0,
        gradient=lambda x: a.copy(),
        name="linear",
    )


def sq_norm(alpha: float, center=None) -> ProxTerm:
    """(alpha/2) ||x - center||^2; strongly convex with modulus alpha."""
    alpha = float(alpha)
    c = None if center is None else np.asarray(center, dtype=float)

    def value(x):
        d = x if c is None else x - c
        return 0.5 * alpha * float(d @ d)

    def prox(g, z):
        if c is None:
            return z / (1.0 + g * alpha)
        return (z + g * alpha * c) / (1.0 + g * alpha)

    def grad(x):
        return alpha * (x if c is None else x - c)

    return ProxTerm(value, prox, mu=alpha, smooth_L=alpha, gradient=grad, name="sqnorm")


def as_smooth(term: ProxTerm, n: int) -> SmoothTerm:
    """View a smooth ProxTerm (one with a gradient) as a SmoothTerm."""
    if term.gradient is None or term.smooth_L is None:
        raise ParameterError(f"{term.name} is not smooth")
    return SmoothTerm(term.value, term.gradient, term.smooth_L, term.mu, term.name)
