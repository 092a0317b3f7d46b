import io
import math

import numpy as np
import pytest

from noisyanneal.chains import (
    CSV_HEADER,
    ChainAborted,
    SgldParams,
    coupled_run,
    hitting_time,
    metropolis_sgld_run,
    sgld_run,
    write_trace_csv,
)
from noisyanneal.diagnostics import build_grid_measure, stationarity_tv
from noisyanneal.geometry import make_body

LINE = make_body("box", 1e-3, lo=[-10], hi=[10])
UNIT = make_body("box", 1e-3, lo=[-1], hi=[1])


def half_sq(x):
    return 0.5 * np.asarray(x, float)[..., 0] ** 2


def exact_grad(x, rng):
    return np.asarray(x, float)


def test_params_must_be_positive():
    with pytest.raises(ValueError):
        SgldParams(1.0, 0.0, 10, 1.0)


def test_no_drift_no_noise_stays_put():
    x0 = np.array([0.3, -0.2])
    body = make_body("ball", 0.1, center=[0, 0], radius=1.0)
    tr = sgld_run(body, lambda x, r: np.zeros(2), None, SgldParams(1.0, 0.1, 200, 1.0), x0,
                  np.random.default_rng(0), zero_noise=True)
    assert np.all(tr.X == x0)


def test_proposal_outside_body_is_rejected():
    x0 = np.array([10.0])
    tr = sgld_run(LINE, lambda x, r: np.array([-50.0]), half_sq, SgldParams(1e6, 0.01, 50, 10.0), x0,
                  np.random.default_rng(0))
    assert np.all(tr.X == x0)
    assert not tr.accepted[1:].any()


def test_step_cap_rejects_long_moves():
    tr = sgld_run(LINE, lambda x, r: np.array([-1.0]), half_sq, SgldParams(1e6, 0.5, 50, 0.1), np.zeros(1),
                  np.random.default_rng(0))
    assert not tr.accepted[1:].any()


def test_blowup_aborts():
    with pytest.raises(ChainAborted):
        sgld_run(LINE, lambda x, r: np.array([1e12]), half_sq, SgldParams(1.0, 1.0, 5, 1.0), np.zeros(1),
                 np.random.default_rng(0))


def test_output_is_argmin_of_fhat():
    tr = sgld_run(LINE, exact_grad, half_sq, SgldParams(10.0, 1e-2, 500, 1.0), np.array([3.0]),
                  np.random.default_rng(1))
    assert tr.fhat[tr.i_star] == tr.fhat.min()
    assert np.array_equal(tr.output, tr.X[np.argmin(tr.fhat)])


def test_quadratic_stationary_moments():
    tr = sgld_run(LINE, exact_grad, half_sq, SgldParams(100.0, 1e-3, 100_000, 5.0), np.array([5.0]),
                  np.random.default_rng(0))
    tail = tr.X[50_000:, 0]
    assert abs(tail.mean()) <= 0.05
    assert abs(tail.var() - 0.01) <= 0.25 * 0.01


def test_metropolis_rejected_proposal_keeps_state():
    x0 = np.array([1.0])
    tr = metropolis_sgld_run(UNIT, lambda x, r: np.array([-100.0]), half_sq, SgldParams(1e6, 0.01, 20, 5.0), x0,
                             np.random.default_rng(0), deterministic=True)
    assert np.all(tr.X == x0)
    assert not tr.extra["mh_rejected"].any()


def test_metropolis_laziness_is_fair():
    tr = metropolis_sgld_run(UNIT, exact_grad, half_sq, SgldParams(10.0, 0.05, 100_000, math.sqrt(0.1)),
                             np.array([0.5]), np.random.default_rng(4), deterministic=True)
    assert abs(np.mean(~tr.extra["lazy"]) - 0.5) <= 0.005


def test_metropolis_reaches_grid_target():
    xi, eta = 10.0, 0.05
    tr = metropolis_sgld_run(UNIT, exact_grad, half_sq, SgldParams(xi, eta, 200_000, math.sqrt(2 * eta)),
                             np.array([0.5]), np.random.default_rng(0), deterministic=True)
    m = build_grid_measure(UNIT, half_sq, xi, 64)
    assert stationarity_tv(tr.X[20_000:], m) <= 0.05


def test_coupling_degenerate_hooks():
    body = make_body("ball", 0.1, center=[0, 0], radius=1.0)
    out = coupled_run(body, body, lambda x, r: np.asarray(x, float), lambda x: float(np.dot(x, x)), None,
                      SgldParams(50.0, 1e-3, 300, 0.2), np.array([0.2, 0.1]), np.random.default_rng(0),
                      deterministic=True, force_ratio_one=True, force_lazy_one=True)
    assert out["first_decouple_step"] is None
    assert np.array_equal(out["X"], out["X_hat"])
    assert np.array_equal(out["X"], out["Y"])


def test_coupling_restricted_copy_splits_only_after_exit():
    full = make_body("box", 1e-3, lo=[-1], hi=[1])
    small = make_body("box", 1e-3, lo=[-0.2], hi=[0.2])
    out = coupled_run(full, small, lambda x, r: np.zeros(1), lambda x: 0.0, None,
                      SgldParams(1.0, 1e-3, 3000, 1.0), np.zeros(1), np.random.default_rng(3),
                      deterministic=True)
    X, Xh = out["X"], out["X_hat"]
    diff = np.flatnonzero(np.any(X != Xh, axis=1))
    exit_step = out["first_exit_step"]
    assert exit_step is not None and len(diff) > 0
    assert diff[0] >= exit_step


def test_hitting_time_edges():
    X = np.array([[0.0], [1.0], [2.0]])
    assert hitting_time(X, lambda x: True) == 0
    assert hitting_time(X, lambda x: False) is None
    assert hitting_time(X, lambda x: x[0] > 1.5) == 2


def test_hitting_time_falls_as_chain_cools():
    x0 = np.array([5.0])
    level = 0.1 * float(half_sq(x0))
    eta = 1e-2
    med = {}
    for xi in (1.0, 10.0, 100.0):
        times = []
        for s in range(50):
            tr = sgld_run(LINE, exact_grad, half_sq, SgldParams(xi, eta, 3000, math.sqrt(2 * eta)), x0,
                          np.random.default_rng(s))
            times.append(hitting_time(tr, lambda x: half_sq(x) <= level))
        med[xi] = np.median(times)
    assert med[1.0] > med[10.0] >= med[100.0]


def test_trace_csv_schema():
    tr = sgld_run(LINE, exact_grad, half_sq, SgldParams(10.0, 1e-2, 5, 1.0), np.array([1.0]),
                  np.random.default_rng(0))
    buf = io.StringIO()
    write_trace_csv(buf, [tr], emit_coords=True)
    lines = buf.getvalue().split("\n")
    assert lines[0] == CSV_HEADER + ",x_0" == "epoch,step,accepted,fhat,f_true,x_0"
    assert len(lines) == 6 + 1 + 1 and lines[-1] == ""
    assert "\r" not in buf.getvalue()
    row = lines[1].split(",")
    assert row[:3] == ["0", "0", "1"] and float(row[3]) == tr.fhat[0]
