"""Stepsize sequences: constant and the two accelerated recursions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Literal

from .operators import ParameterError

Kind = Literal["constant", "accel_pd3o", "accel_pddy"]


class ScheduleError(ValueError):
    """Raised when an accelerated schedule is used outside its hypotheses."""


def next_gamma_pd3o(gamma: float, mu_F: float, mu_R: float, kappa: float) -> float:
    a = gamma * mu_F * kappa
    return (-gamma * a + gamma * math.sqrt(a * a + 1.0 + 2.0 * gamma * mu_R)) / (1.0 + 2.0 * gamma * mu_R)


def next_gamma_pddy(gamma: float, mu_F: float, kappa: float) -> float:
    if not mu_F > 0:
        raise ScheduleError("the accelerated PDDY schedule requires mu_F > 0")
    a = gamma * mu_F * kappa
    return -gamma * a + gamma * math.sqrt(a * a + 1.0)


@dataclass(frozen=True)
class Schedule:
    """A stepsize sequence gamma_0, gamma_1, ...

    For the accelerated kinds gamma_1 = gamma_0 and the recursion produces
    gamma_{k+1} from gamma_k for k >= 1.
    """

    kind: Kind = "constant"
    gamma0: float = 1.0
    kappa: float = 0.15
    mu_F: float = 0.0
    mu_R: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "accel_pd3o", "accel_pddy"):
            raise ParameterError(f"unknown schedule kind {self.kind!r}")
        if not self.gamma0 > 0:
            raise ParameterError("gamma0 must be positive")
        if self.kind != "constant" and not 0 < self.kappa < 1:
            raise ParameterError("kappa must lie in (0, 1)")
        if self.kind == "accel_pddy" and not self.mu_F > 0:
            raise ScheduleError("the accelerated PDDY schedule requires mu_F > 0")

    @property
    def rate_const(self) -> float:
        """mu_F kappa + mu_R, the limit of 1 / (k gamma_k)."""
        if self.kind == "accel_pddy":
            return self.mu_F * self.kappa
        return self.mu_F * self.kappa + self.mu_R

    def step(self, gamma: float) -> float:
        if self.kind == "constant":
            return gamma
        if self.kind == "accel_pd3o":
            return next_gamma_pd3o(gamma, self.mu_F, self.mu_R, self.kappa)
        return next_gamma_pddy(gamma, self.mu_F, self.kappa)

    def __iter__(self) -> Iterator[float]:
        g = self.gamma0
        yield g  # gamma_0
        yield g  # gamma_1
        while True:
            g = self.step(g)
            yield g

    def take(self, n: int) -> list[float]:
        it = iter(self)
        return [next(it) for _ in range(n)]

    def validate(self, L_F: float) -> None:
        """Check gamma0 against the smoothness constant of F (no check when L_F == 0)."""
        if L_F <= 0:
            return
        bound = 2.0 / L_F if self.kind == "constant" else 2.0 * (1.0 - self.kappa) / L_F
        # the standard deblurring setting (gamma0 = 1.7, kappa = 0.15) sits exactly on the accelerated bound
        if self.gamma0 > bound * (1.0 + 1e-12):
            raise ParameterError(f"gamma0={self.gamma0} exceeds the admissible bound {bound} for kind {self.kind}")


def asymptote_check(schedule: Schedule, k_max: int) -> float:
    """k_max * gamma_{k_max} * (mu_F kappa + mu_R), which tends to 1."""
    c = schedule.rate_const
    if not c > 0:
        raise ScheduleError("undefined asymptote: mu_F kappa + mu_R = 0")
    if k_max < 1:
        raise ParameterError("k_max must be >= 1")
    g = schedule.gamma0
    for _ in range(k_max - 1):
        g = schedule.step(g)
    return k_max * g * c
