import math
import warnings

import numpy as np
import pytest

from noisyanneal.chains import SgldParams
from noisyanneal.diagnostics import (
    build_grid_measure,
    cheeger_stability_check,
    conductance_estimate,
    detailed_balance_residual,
    escape_bound,
    escape_probability_experiment,
    estimate_cheeger_1d,
    estimate_cheeger_2d,
    ratio_sandwich_check,
    sample_from_measure,
    smoothed_value_quadrature,
    stationarity_tv,
)
from noisyanneal.geometry import make_body
from noisyanneal.noise import make_oracle, make_ripple_noise
from noisyanneal.objective import make_test_objective
from noisyanneal.smoothing import make_smoothed, smoothed_value_mc


def zero(x):
    return np.zeros(np.shape(x)[:-1])


def ident(x):
    return np.asarray(x, float)[..., 0]


def half_sq(x):
    return 0.5 * np.asarray(x, float)[..., 0] ** 2


def test_uniform_weights():
    m = build_grid_measure(None, zero, 3.0, 10, bounds=(0.0, 1.0))
    assert np.allclose(m.weights, 0.1, rtol=0, atol=1e-15)


def test_exponential_tilt():
    m = build_grid_measure(None, ident, 1.0, 10, bounds=(0.0, 1.0))
    assert m.weights[0] / m.weights[-1] == pytest.approx(math.exp(0.9), rel=1e-12)


def test_grid_refinement_tv():
    f = lambda x: np.abs(np.asarray(x)[..., 0] - 0.3)
    m64 = build_grid_measure(None, f, 5.0, 64, bounds=(0.0, 1.0))
    m128 = build_grid_measure(None, f, 5.0, 128, bounds=(0.0, 1.0))
    coarse = m128.weights.reshape(64, 2).sum(axis=1)
    assert 0.5 * np.abs(coarse - m64.weights).sum() <= 0.01


def test_2d_grid_masks_body():
    body = make_body("ball", 0.1, center=[0, 0], radius=0.9)
    m = build_grid_measure(body, lambda x: np.zeros(len(x)), 1.0, 20)
    assert m.weights.sum() == pytest.approx(1.0)
    assert not m.mask.all() and m.weights[~m.mask].sum() == 0


def test_cheeger_half_interval():
    m = build_grid_measure(None, zero, 1.0, 100, bounds=(0.0, 1.0))
    est = estimate_cheeger_1d(m, (0, 50))
    assert est.value == pytest.approx(2.0, abs=1e-9)


def test_cheeger_all_but_one_cell():
    n = 100
    m = build_grid_measure(None, zero, 1.0, n, bounds=(0.0, 1.0))
    est = estimate_cheeger_1d(m, (0, n - 1))
    # best set is V itself: rim one cell of mass 1/n, mass (n-1)/n, eps 1/n
    assert est.value == pytest.approx(n / (n - 1), abs=1e-9)


def test_cheeger_far_concentration_is_large():
    R = 1.0
    m = build_grid_measure(None, lambda x: (np.asarray(x)[..., 0] - 0.9) ** 2, 1e4, 200, bounds=(0.0, R))
    assert estimate_cheeger_1d(m, (0, 60)).value >= 1 / R


def test_cheeger_2d_uniform_half_square():
    m = build_grid_measure(None, lambda x: np.zeros(len(x)), 1.0, 10, bounds=((0, 0), (1, 1)))
    V = np.zeros((10, 10), dtype=bool)
    V[:5] = True
    est = estimate_cheeger_2d(m, V)
    # taking A = V: rim is one row of 10 cells (mass 0.1), mass 0.5, eps 0.1
    assert est.value <= 2.0 + 1e-12


def test_stability_identical_measures():
    m = build_grid_measure(None, half_sq, 4.0, 64, bounds=(-1.0, 1.0))
    st = cheeger_stability_check(m, m, 0.0, 4.0)
    assert st.passed and st.factor == 1.0


def test_stability_constant_shift():
    mF = build_grid_measure(None, half_sq, 4.0, 64, bounds=(-1.0, 1.0))
    mH = build_grid_measure(None, lambda x: half_sq(x) + 0.3, 4.0, 64, bounds=(-1.0, 1.0))
    assert np.allclose(mF.weights, mH.weights)
    st = cheeger_stability_check(mF, mH, 0.3, 4.0)
    assert st.passed and st.factor == pytest.approx(math.exp(-2.4))


def test_stability_rejects_mismatched_grids():
    a = build_grid_measure(None, half_sq, 1.0, 64, bounds=(-1.0, 1.0))
    b = build_grid_measure(None, half_sq, 1.0, 32, bounds=(-1.0, 1.0))
    with pytest.raises(ValueError):
        cheeger_stability_check(a, b, 0.0, 1.0)


def test_stability_warns_when_N_too_small():
    mF = build_grid_measure(None, half_sq, 1.0, 64, bounds=(-1.0, 1.0))
    mH = build_grid_measure(None, lambda x: half_sq(x) + 0.3, 1.0, 64, bounds=(-1.0, 1.0))
    with pytest.warns(UserWarning):
        cheeger_stability_check(mF, mH, 0.1, 1.0)


def test_iid_samples_match_measure():
    m = build_grid_measure(None, half_sq, 5.0, 64, bounds=(-1.0, 1.0))
    x = sample_from_measure(m, 100_000, np.random.default_rng(0))
    assert stationarity_tv(x, m) <= 0.02


def test_constant_trace_tv():
    m = build_grid_measure(None, half_sq, 5.0, 64, bounds=(-1.0, 1.0))
    x = np.full(20_000, 0.01)
    cell = np.searchsorted(m.edges[0], 0.01) - 1
    assert stationarity_tv(x, m) == pytest.approx(1 - m.weights[cell], abs=1e-12)


def test_short_tail_warns():
    m = build_grid_measure(None, half_sq, 5.0, 64, bounds=(-1.0, 1.0))
    with pytest.warns(UserWarning):
        stationarity_tv(np.zeros(100), m)


def test_conductance_of_iid_trace():
    m = build_grid_measure(None, zero, 1.0, 16, bounds=(0.0, 1.0))
    x = sample_from_measure(m, 50_000, np.random.default_rng(1))
    est = conductance_estimate(x, m)
    # i.i.d. uniform draws leave a half-line of mass p with rate 1 - p
    assert est["phi"] == pytest.approx(1 - est["mass"], abs=0.02)


def test_detailed_balance_holds():
    body = make_body("box", 1e-3, lo=[-1], hi=[1])
    pts = np.linspace(-0.9, 0.9, 15)[:, None]
    res = detailed_balance_residual(body, lambda x: np.asarray(x, float), half_sq, 5.0, 0.02, 0.5, pts)
    assert res <= 1e-12


def smoothed_1d(alpha=0.0, beta=0.0, sigma=0.05):
    body = make_body("box", 0.1, lo=[-1], hi=[1])
    f = make_test_objective("quadratic", {"minimizer": [0.0]}, body=body, r_thick=0.1)
    psi, phi = make_ripple_noise(alpha, beta, 0.1, 0, 1) if alpha or beta else (None, None)
    orc = make_oracle(f, psi, phi, alpha, beta, domain=body.thickened(0.1))
    return body, make_smoothed(orc, body, 0.1, sigma=sigma)


def test_quadrature_matches_closed_form():
    body, s = smoothed_1d(sigma=0.05)
    x = np.array([[0.0], [0.3], [-0.5]])
    # E ½(x+σZ)² = ½x² + ½σ²
    assert np.allclose(smoothed_value_quadrature(s, x), 0.5 * x[:, 0] ** 2 + 0.5 * 0.05**2, atol=1e-14)


def test_quadrature_agrees_with_monte_carlo():
    body, s = smoothed_1d(0.2, 0.01, sigma=0.05)
    q = smoothed_value_quadrature(s, np.array([0.4]))
    m, se = smoothed_value_mc(s, np.array([0.4]), 200_000, np.random.default_rng(0))
    assert abs(q - m) <= 4 * se


def test_escape_unreachable_threshold():
    body, s = smoothed_1d(sigma=0.05)
    params = SgldParams(50.0, 1e-9, 200, 1.0)
    out = escape_probability_experiment(body, s, params, 10.0, 20, [0.2], 0.01, 0.1, check_step=False)
    assert out["empirical"] == 0 and out["bound"] >= 0


def test_escape_vacuous_bound():
    body, s = smoothed_1d(sigma=0.05)
    ft_y = float(smoothed_value_quadrature(s, np.array([0.2])))
    b = escape_bound(s, body, 50.0, ft_y - 0.1, ft_y, 0.01, 0.1)
    assert b >= 1


def test_escape_step_precondition():
    body, s = smoothed_1d(sigma=0.05)
    with pytest.raises(ValueError, match="precondition"):
        escape_probability_experiment(body, s, SgldParams(50.0, 1.0, 10, 1.0), 1.0, 2, [0.2], 0.01, 0.1)


def test_ratio_sandwich_noiseless_points():
    body, s = smoothed_1d(sigma=0.05)
    pts = np.linspace(-0.9, 0.9, 9)[:, None]
    fh = 0.5 * pts[:, 0] ** 2
    out = ratio_sandwich_check(s, pts, fh, 0.05, 4000, np.random.default_rng(0))
    assert out["passed"]


def test_ratio_sandwich_flags_bad_values():
    body, s = smoothed_1d(sigma=0.05)
    pts = np.array([[0.8]])
    out = ratio_sandwich_check(s, pts, [50.0], 0.05, 4000, np.random.default_rng(0))
    assert not out["passed"] and out["violations"] == 1
