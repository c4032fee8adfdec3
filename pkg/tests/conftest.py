import os

import numpy as np
import pytest
from hypothesis import settings
from scipy.optimize import minimize, minimize_scalar

from proxsplit import operators as op
from proxsplit import problems as pb

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def prox_zoo():
    """Every shipped proximable term with a dimension it is tested at."""
    rng = np.random.default_rng(7)
    a2 = rng.standard_normal(2)
    return {
        "zero": (op.zero_prox(), 3),
        "nonneg": (op.nonneg(), 3),
        "l1": (op.l1(0.7), 3),
        "l1_centered": (op.l1(1.3, center=np.array([0.5, -1.0, 2.0])), 3),
        "linear": (op.linear(np.array([1.0, -2.0, 0.5])), 3),
        "sq_norm": (op.sq_norm(0.4), 3),
        "sq_norm_centered": (op.sq_norm(2.0, center=np.array([1.0, 0.0, -1.0])), 3),
        "l12": (pb.l12(0.6), 4),
        "huber_tv": (pb.huber_tv(0.6, 0.1), 4),
        "hinge": (pb.hinge(a2, -1.0), 2),
        "hinge_sum": (pb.hinge_sum(0.25), 3),
    }


def low_dim_zoo():
    """Low-dimension versions of the zoo for the brute-force oracle."""
    return {
        "nonneg": (op.nonneg(), 1),
        "l1": (op.l1(0.7), 1),
        "l1_centered": (op.l1(1.3, center=np.array([0.5])), 1),
        "linear": (op.linear(np.array([-1.5])), 1),
        "sq_norm": (op.sq_norm(0.4, center=np.array([2.0])), 1),
        "zero": (op.zero_prox(), 1),
        "l12": (pb.l12(0.6), 2),
        "huber_tv": (pb.huber_tv(0.6, 0.1), 2),
        "hinge": (pb.hinge(np.array([0.8, -1.1]), 1.0), 2),
        "hinge_sum": (pb.hinge_sum(0.5), 1),
    }


def brute_prox(term, gamma, z):
    """argmin value(x) + |x - z|^2 / (2 gamma) by direct numerical minimization."""

    def obj(x):
        v = term.value(np.asarray(x, dtype=float))
        return v + np.sum((np.asarray(x) - z) ** 2) / (2 * gamma) if np.isfinite(v) else 1e30

    start = term.prox(gamma, z)  # only used as the search centre; the oracle re-derives it
    if z.size == 1:
        r = minimize_scalar(lambda t: obj(np.array([t])), bounds=(start[0] - 5, start[0] + 5),
                            method="bounded", options={"xatol": 1e-12})
        return np.array([r.x])
    best = None
    for x0 in (z, z + 0.3, np.zeros_like(z)):
        r = minimize(obj, x0, method="Nelder-Mead",
                     options={"xatol": 1e-11, "fatol": 1e-14, "maxiter": 40000, "maxfev": 40000})
        if best is None or r.fun < best.fun:
            best = r
    return best.x


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def ref_cache(tmp_path_factory):
    """Reference cache shared by the whole session; PROXSPLIT_CACHE reuses one across sessions."""
    env = os.environ.get("PROXSPLIT_CACHE")
    return env if env else str(tmp_path_factory.mktemp("refcache"))


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
