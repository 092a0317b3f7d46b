import math
from dataclasses import replace

import mpmath
import numpy as np
import pytest

from noisyanneal.annealing import (
    AnnealConfig,
    InfeasibleSchedule,
    anneal_run,
    binary_search_shift,
    build_schedule,
    compute_i_max,
    compute_k_max,
    compute_schedule,
)
from noisyanneal.cli import read_config
from noisyanneal.config import build_instance
from noisyanneal.geometry import make_body
from noisyanneal.noise import make_oracle, make_ripple_noise, noisy_eval
from noisyanneal.objective import make_test_objective
from noisyanneal.smoothing import make_smoothed


def worked_example(alpha=1e-5, mode="theory", **kw):
    """d=2, R=1, λ=1, ε=1/50, 𝔇=0.5, r′=0.1."""
    body = make_body("ball", 0.1, center=[0, 0], radius=0.9)
    f = make_test_objective("scaled_norm", {"minimizer": [0.2, 0.1], "scale": 1.0}, body=body, r_thick=0.1)
    psi, phi = make_ripple_noise(alpha, 1e-3, 0.1, 1, 2)
    orc = make_oracle(f, psi, phi, alpha, 1e-3)
    sm = make_smoothed(orc, body, 0.1)
    cfg = AnnealConfig(eps_hat=0.75, mode=mode, **kw)
    return body, orc, sm, cfg


def test_worked_example_temperature():
    body, orc, sm, cfg = worked_example()
    assert (body.dimension, body.bounding_radius, orc.base.lipschitz, cfg.D_frak) == (2, 1.0, 1.0, 0.5)
    s = build_schedule(cfg, body, orc, sm.constants, 0.8)
    xi = s.xi(0.5)
    assert xi == pytest.approx(8 * math.log(1 / 0.005) / (0.004 * 0.5), rel=1e-12)
    assert abs(xi - 2.119e4) <= 1e-3 * 2.119e4


def test_temperature_inverse_in_J_and_clamped():
    body, orc, sm, cfg = worked_example()
    s = build_schedule(cfg, body, orc, sm.constants, 0.8)
    assert s.xi(1.4) == pytest.approx(s.xi(0.7) / 2, rel=1e-14)
    assert s.xi(0.01) == s.xi(s.D_frak) <= s.xi_bar
    assert s.xi_bar == pytest.approx(5 * s.xi(s.D_frak), rel=1e-14)


def test_modes_share_temperatures():
    body, orc, sm, cfg = worked_example()
    st = build_schedule(cfg, body, orc, sm.constants, 0.8)
    sp = build_schedule(replace(cfg, mode="practical"), body, orc, sm.constants, 0.8)
    for J in (0.1, 0.5, 0.8, 3.0):
        assert st.xi(J) == sp.xi(J)


@pytest.mark.parametrize("ratio,expected", [(1.0, 4), (0.2, 1), (100.0, 10)])
def test_k_max_examples(ratio, expected):
    assert compute_k_max(ratio * 0.5, 0.5, 1 / 50) == expected


def test_schedule_identities():
    body, orc, sm, cfg = worked_example(mode="practical", eta0=0.01)
    s = build_schedule(cfg, body, orc, sm.constants, 0.8)
    assert s.delta == pytest.approx(cfg.delta_prime / (6 * (s.k_max + 1)), rel=1e-15)
    assert s.r == pytest.approx(s.delta / (s.xi_bar * s.constants.lambda_tilde), rel=1e-15)
    assert s.D == pytest.approx(math.sqrt(2 * s.eta_bar * 2), rel=1e-15)
    assert s.omega == pytest.approx(s.eps * s.D_frak)
    xi, eta = compute_schedule(s, 0.8)
    assert xi == s.xi(0.8) and eta == s.eta(xi)


def test_practical_eta_scales_as_inverse_square():
    body, orc, sm, cfg = worked_example(mode="practical", eta0=0.01)
    s = build_schedule(cfg, body, orc, sm.constants, 0.8)
    assert s.eta(s.xi(0.8)) == pytest.approx(0.01)
    assert s.eta(2 * s.xi(0.8)) == pytest.approx(0.0025)


def test_theory_eta_is_literal_formula():
    body, orc, sm, cfg = worked_example()
    s = build_schedule(cfg, body, orc, sm.constants, 0.8)
    k = s.constants
    xi = s.xi(0.6)
    bracket = s.alpha / (1 - s.alpha_dagger) * (3 + s.eps * s.B + s.beta / s.D_frak) + s.beta / s.D_frak
    factor = mpmath.exp(-(100 * 2 / s.eps) * bracket * s.log_term)
    last = factor**2 / (s.R * 8 * ((xi * k.G) ** 2 + xi * k.L) ** 2)
    ref = min(mpmath.mpf(k.zeta_max), 2 * s.omega**2 / s.lam**2, k.b_max**2 / 2, last)
    assert s.eta(xi) == pytest.approx(float(ref), rel=1e-10)


def _i_max_reference(s, alpha_power=True):
    k = s.constants
    d, R, eps, delta = s.d, s.R, s.eps, s.delta
    with mpmath.workdps(60):
        num = (8 * R * k.lambda_tilde * s.xi_bar + 4 * d * (1 + mpmath.log(1 + s.xi_bar)
               + mpmath.log(2 * R * k.lambda_tilde / delta)) + 4 * mpmath.log(1 / delta))
        bracket = s.alpha / (1 - s.alpha_dagger) * (3 + eps * s.B_prime + s.beta / s.D_frak) + s.beta / s.D_frak
        den = mpmath.sqrt(s.eta_bar_dagger / d) / (1536 * R) * mpmath.exp(-(150 * d / eps) * bracket * s.log_term)
        ratio = num / den**2
        power = 1 / (1 - 150 * s.alpha / eps) if alpha_power else 1
        return ratio, int(mpmath.ceil(ratio**power)) + 1


def test_i_max_alpha_zero_direct():
    body, orc, sm, cfg = worked_example(alpha=0.0)
    s = build_schedule(cfg, body, orc, sm.constants, 0.8)
    val, digits, lv = compute_i_max(s)
    ratio, ref = _i_max_reference(s)
    assert digits == len(str(ref))
    assert abs(val - ref) <= 1e-9 * ref + 1


def test_i_max_power_two_when_exponent_half():
    alpha = 0.5 / 150 * (1 / 50)
    body, orc, sm, cfg = worked_example(alpha=alpha)
    s = build_schedule(cfg, body, orc, sm.constants, 0.8)
    _, _, lv = compute_i_max(s)
    ratio, _ = _i_max_reference(s, alpha_power=False)
    assert lv == pytest.approx(2 * float(mpmath.log(ratio)), rel=1e-10)


def test_i_max_infeasible_alpha():
    body, orc, sm, cfg = worked_example(alpha=1.0 / 150 * (1 / 50) * 1.01)
    with pytest.raises(InfeasibleSchedule, match="alpha"):
        build_schedule(cfg, body, orc, sm.constants, 0.8)


def test_practical_i_max_is_budget():
    body, orc, sm, cfg = worked_example(mode="practical", i_max=1234)
    s = build_schedule(cfg, body, orc, sm.constants, 0.8)
    assert compute_i_max(s)[0] == 1234 == s.i_max


def instance(name, **anneal):
    cfg = read_config(f"builtin:{name}")
    inst = build_instance(cfg)
    if anneal:
        inst = replace(inst, anneal=replace(inst.anneal, **anneal))
    return inst


def test_noiseless_quadratic_anneal_succeeds():
    inst = instance("quadratic2d")
    J0 = float(noisy_eval(inst.oracle, inst.x0))
    k = compute_k_max(J0, inst.anneal.D_frak, inst.anneal.eps)
    cfg = replace(inst.anneal, i_max=200_000 // k)
    wins = 0
    for seed in range(20):
        res = anneal_run(inst.body, inst.oracle, inst.smoothed, cfg, inst.x0, seed)
        wins += res.f_true <= cfg.eps_hat
    assert wins >= 18


def test_epochs_and_monotone_structure():
    inst = instance("ripple2d", i_max=3000)
    res = anneal_run(inst.body, inst.oracle, inst.smoothed, inst.anneal, inst.x0, 11)
    s = res.schedule
    assert len(res.epochs) == s.k_max
    assert res.total_steps == s.k_max * 3000
    slack = 2 * s.r * s.lam * (1 + s.alpha) + 2 * s.beta
    for a, b in zip(res.epochs, res.epochs[1:]):
        assert b.J <= a.J + slack
        if b.J_hat <= a.J_hat:
            assert b.xi >= a.xi
    assert np.array_equal(res.x_hat, res.epochs[-1].output)


def test_anneal_is_deterministic():
    inst = instance("ripple2d", i_max=500)
    a = anneal_run(inst.body, inst.oracle, inst.smoothed, inst.anneal, inst.x0, 5, keep_traces=True)
    b = anneal_run(inst.body, inst.oracle, inst.smoothed, inst.anneal, inst.x0, 5, keep_traces=True)
    for ta, tb in zip(a.traces, b.traces):
        assert np.array_equal(ta.X, tb.X)


def test_shift_search_zero_offset_noiseless():
    body = make_body("ball", 0.2, center=[0, 0], radius=0.8)
    f = make_test_objective("quadratic", {"minimizer": [0.3, -0.2]}, body=body, r_thick=0.2)
    orc = make_oracle(f, domain=body.thickened(0.2))
    sm = make_smoothed(orc, body, 0.2, sigma=0.02)
    cfg = AnnealConfig(eps_hat=0.1, eta0=0.05, eps=0.039)
    n = math.ceil(math.log2(2 / 0.1))
    out = binary_search_shift(orc, sm, body, 0.0, cfg, (-1.0, 1.0), n, np.array([-0.5, 0.4]), 0,
                              probe_budget=20_000)
    assert abs(out["m_estimate"]) <= 0.1
    assert len(out["probes"]) <= n


def test_shift_search_probe_count_bound():
    inst = instance("shift7")
    lo, hi, eh = 0.0, 16.0, inst.anneal.eps_hat
    bound = math.ceil(math.log2((hi - lo) / eh))
    out = binary_search_shift(inst.oracle, inst.smoothed, inst.body, inst.oracle.beta, inst.anneal, (lo, hi),
                              100, inst.x0, 0, probe_budget=5000)
    assert len(out["probes"]) <= bound
    w = out["bracket"][1] - out["bracket"][0]
    assert w <= eh


def test_config_validation():
    with pytest.raises(ValueError):
        AnnealConfig(eps_hat=0.1, mode="lukewarm")
    with pytest.raises(ValueError):
        AnnealConfig(eps_hat=-1.0)
    with pytest.raises(ValueError):
        AnnealConfig(eps_hat=0.1, eps=0.05)
