import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from noisyanneal.geometry import make_body
from noisyanneal.noise import (
    ConstantNoise,
    affine_components,
    equation_system_levels,
    make_equation_system_oracle,
    make_oracle,
    make_ripple_noise,
    noisy_eval,
    sample_body,
    verify_noise_bounds,
)
from noisyanneal.objective import ConvexObjective, make_test_objective

BODY = make_body("ball", 0.2, center=[0, 0], radius=1.0)
QUAD = make_test_objective("quadratic", {"minimizer": [0.3, -0.2]}, body=BODY, r_thick=0.2)


def const_objective(v):
    return ConvexObjective(lambda x: np.full(np.shape(x)[:-1], v) if np.ndim(x) > 1 else v,
                           lambda x: np.zeros_like(x), 0.0, np.zeros(2))


def test_zero_noise_is_exact():
    orc = make_oracle(QUAD)
    x = sample_body(BODY, 1000, np.random.default_rng(0))
    assert np.array_equal(noisy_eval(orc, x), QUAD(x))


def test_minimizer_sees_only_additive_part():
    psi, _ = make_ripple_noise(0.3, 0.0, 0.1, 4, 2)
    orc = make_oracle(QUAD, psi, ConstantNoise(0.01), 0.3, 0.01)
    assert noisy_eval(orc, QUAD.minimizer) == 0.01


def test_direct_substitution():
    orc = make_oracle(const_objective(2.0), ConstantNoise(0.1), ConstantNoise(-0.05), 0.2, 0.1)
    assert noisy_eval(orc, np.zeros(2)) == pytest.approx(2.15, abs=1e-15)


def test_zero_level_ripples_vanish():
    psi, phi = make_ripple_noise(0.0, 0.0, 0.1, 0, 2)
    x = np.random.default_rng(0).uniform(-1, 1, (100, 2))
    assert np.all(psi(x) == 0) and np.all(phi(x) == 0)


def test_ripple_amplitudes_bounded():
    psi, phi = make_ripple_noise(0.3, 0.002, 0.1, 9, 2)
    x = np.random.default_rng(1).uniform(-3, 3, (100_000, 2))
    assert np.abs(psi(x)).max() <= 0.3
    assert np.abs(phi(x)).max() <= 0.002


def test_ripple_is_deterministic():
    psi, phi = make_ripple_noise(0.3, 0.002, 0.1, 9, 2)
    psi2, phi2 = make_ripple_noise(0.3, 0.002, 0.1, 9, 2)
    x = np.array([0.123, -0.456])
    assert psi(x) == psi(x) == psi2(x)
    assert phi(x) == phi2(x)


def test_equation_system_levels():
    assert equation_system_levels(0.0, 0.1) == pytest.approx((0.2, 0.06), abs=1e-15)
    assert equation_system_levels(0.0, 0.0) == (0.0, 0.0)
    assert equation_system_levels(0.1, 0.1) == pytest.approx((0.43, 0.065), abs=1e-15)


def test_equation_system_envelope_brute_force():
    xs = np.array([0.1, 0.2])
    A = np.array([[1.0, 0.5], [-0.3, 1.0], [0.2, 0.2]])
    comps, grads = affine_components(A, A @ xs)
    orc = make_equation_system_oracle(comps, 0.1, 0.1, xs, seed=2, gradients=grads)
    assert (orc.alpha, orc.beta) == pytest.approx((0.43, 0.065))
    x = sample_body(BODY, 100_000, np.random.default_rng(3))
    F = orc.base.evaluate(x)
    assert np.max(np.abs(noisy_eval(orc, x) - F) - orc.alpha * F) <= orc.beta


def test_verify_ripple_at_declared_levels():
    psi, phi = make_ripple_noise(0.3, 0.001, 0.1, 3, 2)
    orc = make_oracle(QUAD, psi, phi, 0.3, 0.001)
    rep = verify_noise_bounds(orc, BODY, 100_000, np.random.default_rng(0))
    assert rep.max_violation <= 0 and rep.ok


def test_verify_detects_misdeclared_noise():
    orc = make_oracle(QUAD, ConstantNoise(0.11), None, 0.1, 0.0)
    rep = verify_noise_bounds(orc, BODY, 10_000, np.random.default_rng(0))
    assert rep.max_violation > 0 and not rep.ok


def test_verify_zero_noise_slack_is_beta():
    orc = make_oracle(QUAD, None, None, 0.0, 0.05)
    rep = verify_noise_bounds(orc, BODY, 1000, np.random.default_rng(0))
    assert rep.max_violation == pytest.approx(-0.05, abs=1e-15)


def test_offset_shifts_values_and_domain_zeroes_outside():
    orc = make_oracle(QUAD, domain=BODY).with_offset(7.0)
    assert noisy_eval(orc, QUAD.minimizer) == 7.0
    assert noisy_eval(orc, np.array([5.0, 5.0])) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 0.9), st.floats(0.0, 0.5), st.integers(0, 1000))
def test_ripple_envelope_property(alpha, beta, seed):
    psi, phi = make_ripple_noise(alpha, beta, 0.2, seed, 2)
    orc = make_oracle(QUAD, psi, phi, alpha, beta)
    rep = verify_noise_bounds(orc, BODY, 2000, np.random.default_rng(seed))
    assert rep.max_violation <= 1e-12


def test_bad_levels_rejected():
    with pytest.raises(ValueError):
        make_oracle(QUAD, alpha=1.0)
    with pytest.raises(ValueError):
        make_oracle(QUAD, beta=-1.0)
