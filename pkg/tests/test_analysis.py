import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smolkin.analysis import (FitError, default_fit_range, detect_oscillations, fit_cutoff,
                              fit_power_law, log_span_per_cycle)

K = np.arange(1, 4001, dtype=float)


def test_exact_power_law():
    fit = fit_power_law(K**-1.5, 10, 1000)
    assert fit.beta == pytest.approx(1.5, abs=1e-10)
    assert fit.residual <= 1e-10
    assert fit.k_range == (10, 1000) and fit.points == 991


def test_cutoff_biases_plain_fit_upward():
    n = K**-1.5 * np.exp(-1e-4 * K)
    # independent estimate: endpoint secant of the same log-log curve
    fit = fit_power_law(n, 10, 200)
    assert 1.5 <= fit.beta <= 1.6
    secant = -(math.log(n[199]) - math.log(n[9])) / (math.log(200) - math.log(10))
    assert fit.beta == pytest.approx(secant, abs=5e-3)


def test_flat_distribution():
    assert fit_power_law(np.full(100, 0.3), 10, 90).beta == pytest.approx(0.0, abs=1e-12)


def test_fit_cutoff_exact():
    lam = 0.01
    n = K**-1.5 * np.exp(-lam**2 * K)
    assert fit_cutoff(n, lam, 10, 4000).beta == pytest.approx(1.5, abs=1e-8)


def test_fit_cutoff_zero_lambda_matches_power_law(rng):
    n = rng.random(500) + 0.1
    assert fit_cutoff(n, 0.0, 10, 400).beta == fit_power_law(n, 10, 400).beta


def test_fit_cutoff_noisy(rng):
    lam = 0.01
    clean = K**-1.5 * np.exp(-lam**2 * K)
    n = clean * (1 + 0.01 * rng.uniform(-1, 1, K.size))
    fit = fit_cutoff(n, lam, 10, 3000)
    # oracle: normal-equation slope on the same noisy data
    x = np.log(K[9:3000])
    y = np.log(n[9:3000]) + lam**2 * K[9:3000]
    slope = np.sum((x - x.mean()) * (y - y.mean())) / np.sum((x - x.mean()) ** 2)
    assert fit.beta == pytest.approx(-slope, abs=1e-9)
    assert fit.beta == pytest.approx(1.5, abs=0.05)


def test_zero_entries_are_excluded_with_warning():
    n = K[:200] ** -2.0
    n[150:] = 0.0
    with pytest.warns(RuntimeWarning, match="effective range"):
        fit = fit_power_law(n, 10, 200)
    assert fit.k_range == (10, 150)
    assert fit.beta == pytest.approx(2.0, abs=1e-10)


def test_too_few_points():
    with pytest.raises(FitError):
        fit_power_law(K**-1.0, 10, 15)
    with pytest.raises(FitError):
        fit_power_law(K**-1.0, 50, 20)


def test_default_range():
    assert default_fit_range(4096) == (10, 4096)
    assert default_fit_range(100000, 0.01) == (10, 30000)


def test_sine_oscillations():
    t = np.arange(0, 50 + 1e-9, 0.01)
    s = detect_oscillations(t, 1 + 0.1 * np.sin(t))
    assert s.cycles == 7
    assert np.all(np.abs(s.periods - 2 * math.pi) <= 0.05)
    assert np.all(np.abs(s.amplitudes[:-1] - 0.2) <= 1e-3)


def test_monotone_and_constant_series():
    t = np.linspace(0, 20, 500)
    assert detect_oscillations(t, 2 / (2 + t)).cycles == 0
    assert detect_oscillations(t, np.full_like(t, 0.7)).cycles == 0


def test_small_jitter_is_filtered():
    t = np.linspace(0, 50, 5000)
    N = 1 + 0.1 * np.sin(t) + 1e-5 * np.sin(400 * t)
    assert detect_oscillations(t, N).cycles == 7


def test_input_validation():
    with pytest.raises(ValueError):
        detect_oscillations(np.arange(10), np.arange(10))
    with pytest.raises(ValueError):
        detect_oscillations(np.zeros(200), np.arange(200))


@settings(max_examples=30, deadline=None)
@given(scale=st.floats(1e-3, 1e3), shift=st.floats(-1e3, 1e3))
def test_oscillation_invariance(scale, shift):
    t = np.linspace(0, 40, 2000)
    N = 1 + 0.3 * np.sin(1.3 * t) * np.exp(-0.01 * t)
    base = detect_oscillations(t, N)
    moved = detect_oscillations(t + shift, scale * N)
    assert moved.cycles == base.cycles
    np.testing.assert_allclose(moved.periods, base.periods, rtol=1e-9)


def test_log_span_per_cycle():
    t = np.linspace(0, 4, 401)
    v = 10 ** np.sin(math.pi * t)
    spans = log_span_per_cycle(t, v, [0.5, 2.5])
    assert spans[0] == pytest.approx(2.0, abs=1e-3)
