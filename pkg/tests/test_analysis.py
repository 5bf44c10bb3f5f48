import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dualspdc.analysis import chsh_from_correlations, correlation_from_counts, fit_fringe
from dualspdc.errors import UndefinedCorrelationError


@given(st.floats(10.0, 1e4), st.floats(0.0, 0.99), st.floats(-math.pi, math.pi))
def test_fit_recovers_exact_sinusoid(a, v, c):
    th = np.radians(np.arange(0, 180, 10))
    y = a * (1 + v * np.cos(2 * th + c))
    fit = fit_fringe(th, y)
    assert fit.offset == pytest.approx(a, rel=1e-9)
    assert fit.visibility == pytest.approx(v, abs=1e-9)
    if v > 1e-3:
        assert math.cos(fit.phase - c) == pytest.approx(1.0, abs=1e-9)


def test_fit_maximum_angle():
    th = np.radians(np.arange(0, 180, 15))
    fit = fit_fringe(th, 1 + np.cos(2 * (th - math.radians(135))))
    assert math.degrees(fit.maximum_theta2()) == pytest.approx(135.0, abs=1e-9)


def test_fit_error_scales_with_sigma():
    th = np.radians(np.arange(0, 180, 10))
    y = 100 * (1 + 0.8 * np.cos(2 * th))
    e1 = fit_fringe(th, y, np.full(th.size, 1.0)).visibility_err
    e2 = fit_fringe(th, y, np.full(th.size, 2.0)).visibility_err
    assert e2 == pytest.approx(2 * e1)
    assert fit_fringe(th, y).visibility_err == 0.0


def test_fit_error_matches_monte_carlo_spread():
    rng = np.random.default_rng(0)
    th = np.radians(np.arange(0, 180, 10))
    mean = 400 * (1 + 0.85 * np.cos(2 * th))
    fits = [fit_fringe(th, y, np.sqrt(np.maximum(y, 1))) for y in rng.poisson(mean, size=(400, th.size))]
    spread = np.std([f.visibility for f in fits])
    assert np.mean([f.visibility_err for f in fits]) == pytest.approx(spread, rel=0.15)


def test_correlation_from_counts():
    E, err = correlation_from_counts(10, 90, 90, 10, [10, 90, 90, 10])
    assert E == pytest.approx(-0.8)
    assert err > 0
    with pytest.raises(UndefinedCorrelationError):
        correlation_from_counts(0, 0, 0, 0, [0, 0, 0, 0])


def test_chsh_from_correlations():
    r = 1 / math.sqrt(2)
    S, err = chsh_from_correlations([-r, r, -r, -r], [0.01] * 4)
    assert S == pytest.approx(2 * math.sqrt(2))
    assert err == pytest.approx(0.02)
