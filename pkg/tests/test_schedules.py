import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from proxsplit.operators import ParameterError
from proxsplit.schedules import Schedule, ScheduleError, asymptote_check, next_gamma_pd3o, next_gamma_pddy


def test_pd3o_recursion_examples():
    assert next_gamma_pd3o(0.8, 0.0, 0.0, 0.3) == 0.8
    assert next_gamma_pd3o(1.0, 0.0, 0.5, 0.5) == pytest.approx(1 / math.sqrt(2), abs=1e-12)
    assert next_gamma_pd3o(1.0, 2.0, 0.0, 0.5) == pytest.approx(math.sqrt(2) - 1, abs=1e-12)


def test_pddy_recursion_examples():
    assert next_gamma_pddy(1.0, 2.0, 0.5) == pytest.approx(math.sqrt(2) - 1, abs=1e-12)
    assert next_gamma_pddy(0.5, 1.0, 0.2) == pytest.approx(-0.05 + 0.5 * math.sqrt(1.01), abs=1e-12)
    assert next_gamma_pddy(0.7, 1e-12, 0.5) == pytest.approx(0.7, abs=1e-11)


def test_pddy_requires_strong_convexity():
    with pytest.raises(ScheduleError):
        next_gamma_pddy(1.0, 0.0, 0.5)
    with pytest.raises(ScheduleError):
        Schedule("accel_pddy", 1.0, 0.5, mu_F=0.0)


def test_first_two_steps_equal():
    s = Schedule("accel_pd3o", 1.7, 0.15, mu_F=0.01)
    g = s.take(4)
    assert g[0] == g[1] == 1.7
    assert g[2] == next_gamma_pd3o(1.7, 0.01, 0.0, 0.15)


def test_constant_schedule():
    assert Schedule("constant", 0.3).take(50) == [0.3] * 50


@pytest.mark.parametrize(
    "kind,mu_F,mu_R,kappa,g0",
    [
        ("accel_pd3o", 0.0, 1.0, 0.5, 1.0),
        ("accel_pd3o", 1.0, 0.0, 0.5, 0.1),
        ("accel_pd3o", 0.01, 0.0, 0.15, 1.7),
        ("accel_pd3o", 0.3, 0.2, 0.7, 2.0),
        ("accel_pddy", 0.01, 0.0, 0.15, 1.7),
        ("accel_pddy", 2.0, 0.0, 0.4, 0.05),
    ],
)
def test_asymptote(kind, mu_F, mu_R, kappa, g0):
    s = Schedule(kind, g0, kappa, mu_F, mu_R)
    assert abs(asymptote_check(s, 100000) - 1) <= 0.01


def test_asymptote_at_one():
    s = Schedule("accel_pd3o", 0.4, 0.5, 1.0, 0.2)
    assert asymptote_check(s, 1) == 0.4 * (0.5 + 0.2)


def test_asymptote_undefined():
    with pytest.raises(ScheduleError):
        asymptote_check(Schedule("accel_pd3o", 1.0, 0.5, 0.0, 0.0), 10)


def test_ratio_tends_to_one():
    s = Schedule("accel_pd3o", 1.0, 0.5, 0.3, 0.1)
    it = iter(s)
    g = [next(it) for _ in range(100002)]
    assert g[100001] / g[100000] >= 0.999


@given(
    st.floats(0.01, 5.0),
    st.floats(0.0, 3.0),
    st.floats(0.0, 3.0),
    st.floats(0.01, 0.99),
)
def test_nonincreasing_and_positive(g0, mu_F, mu_R, kappa):
    if mu_F * kappa + mu_R == 0:
        return
    g = np.array(Schedule("accel_pd3o", g0, kappa, mu_F, mu_R).take(300))
    assert np.all(g > 0)
    assert np.all(np.diff(g[1:]) <= 1e-15)


@given(st.floats(0.01, 5.0), st.floats(0.001, 3.0), st.floats(0.01, 0.99))
def test_pddy_nonincreasing(g0, mu_F, kappa):
    g = np.array(Schedule("accel_pddy", g0, kappa, mu_F).take(300))
    assert np.all(g > 0)
    assert np.all(np.diff(g[1:]) <= 1e-15)


def test_validate_bounds():
    Schedule("constant", 1.99).validate(1.0)
    with pytest.raises(ParameterError):
        Schedule("constant", 2.01).validate(1.0)
    # the deblurring setting gamma0 = 1.7, kappa = 0.15, L = 1 sits on the accelerated bound
    Schedule("accel_pd3o", 1.7, 0.15, mu_F=0.01).validate(1.0)
    with pytest.raises(ParameterError):
        Schedule("accel_pd3o", 1.8, 0.15, mu_F=0.01).validate(1.0)
    # F = 0: any gamma0
    Schedule("constant", 50.0).validate(0.0)


def test_invalid_parameters():
    with pytest.raises(ParameterError):
        Schedule("constant", 0.0)
    with pytest.raises(ParameterError):
        Schedule("accel_pd3o", 1.0, kappa=1.0)
    with pytest.raises(ParameterError):
        Schedule("cosine", 1.0)
