import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from noisyanneal import bench as bench_mod
from noisyanneal.cli import builtin_configs, main, read_config
from noisyanneal.config import ConfigError, RunConfig, build_instance, emit_config, parse_config

QUAD = """
seed = 3
[body]
kind = "ball"
rounding_radius = 0.2
center = [0.0, 0.0]
radius = 0.8
[objective]
kind = "quadratic"
minimizer = [0.35, -0.25]
[smoothing]
sigma = 0.01
[anneal]
eps_hat = 0.075
budget = 40000
eta0 = 0.1
x0 = [-0.6, 0.5]
"""


@pytest.fixture
def quad_file(tmp_path):
    p = tmp_path / "quad.toml"
    p.write_text(QUAD, encoding="utf-8")
    return str(p)


def test_builtin_configs_parse():
    names = builtin_configs()
    assert {"ripple2d", "quadratic2d", "shift7", "theory2d"} <= set(names)
    for n in names:
        build_instance(read_config(f"builtin:{n}"))


def test_round_trip_builtins():
    for n in builtin_configs():
        c = read_config(f"builtin:{n}")
        assert parse_config(emit_config(c)) == c
        assert parse_config(c.emit()).hash() == c.hash()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**64 - 1), st.floats(1e-3, 10), st.sampled_from(["theory", "practical"]),
       st.one_of(st.just("auto"), st.floats(1e-4, 1.0)), st.booleans(), st.floats(0, 0.9))
def test_round_trip_property(seed, eps_hat, mode, sigma, coords, alpha):
    c = RunConfig(seed=seed)
    c = replace(c, anneal=replace(c.anneal, eps_hat=eps_hat, mode=mode),
                smoothing=replace(c.smoothing, sigma=sigma),
                output=replace(c.output, emit_coords=coords),
                noise=replace(c.noise, kind="ripple", alpha=alpha, beta=0.01))
    assert parse_config(emit_config(c)) == c


@pytest.mark.parametrize("text,msg", [
    ("[anneal]\nepshat = 0.1\n", "unknown key"),
    ("[annealing]\n", "unknown top-level"),
    ("[anneal]\neps_hat = 'big'\n", "expected a number"),
    ("[body]\nkind = 'torus'\n", "unknown body kind"),
    ("seed = -1\n", "64-bit"),
    ("[anneal\n", "TOML"),
])
def test_bad_configs_rejected(text, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(text)


def test_run_noiseless_quadratic(quad_file, tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["run", "--config", quad_file, "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["final_f"] <= 0.075
    assert {"final_fhat", "final_f", "epochs", "steps", "seed", "config_hash"} <= set(summary)
    assert summary["seed"] == 3
    head = (out / "trace.csv").read_text().split("\n", 1)[0]
    assert head == "epoch,step,accepted,fhat,f_true"


def test_run_is_byte_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["run", "--config", "builtin:ripple2d", "--seed", "9", "--out", str(d), "--emit-coords"]) == 0
    assert (a / "trace.csv").read_bytes() == (b / "trace.csv").read_bytes()
    assert (a / "trace.csv").read_text().split("\n", 1)[0].endswith(",x_0,x_1")


def test_theory_mode_infeasible_exit_code(tmp_path, capsys):
    code = main(["run", "--config", "builtin:ripple2d", "--mode", "theory", "--out", str(tmp_path)])
    assert code == 2
    assert "(150/eps)*alpha" in capsys.readouterr().err


def test_config_error_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text("[anneal]\nwhat = 1\n")
    assert main(["run", "--config", str(p)]) == 1
    assert main(["run", "--config", "builtin:nope"]) == 1


def test_schedule_worked_example(capsys):
    assert main(["schedule", "--config", "builtin:theory2d"]) == 0
    out = json.loads(capsys.readouterr().out)
    xi = [row["xi"] for row in out["table"] if row["J_hat"] == 0.5]
    assert xi and abs(xi[0] - 2.119e4) <= 1e-3 * 2.119e4
    assert out["i_max"] == {"digits": out["i_max"]["digits"]} and out["i_max"]["digits"] > 18
    for key in ("xi_bar", "r", "D", "eta_bar", "eta_bar_dagger", "k_max"):
        assert key in out


def test_schedule_practical_i_max_is_budget(tmp_path, capsys):
    p = tmp_path / "c.toml"
    p.write_text(QUAD.replace("budget = 40000", "i_max = 777"))
    assert main(["schedule", "--config", str(p)]) == 0
    assert json.loads(capsys.readouterr().out)["i_max"] == 777


def test_verify_noise(capsys):
    assert main(["verify-noise", "--config", "builtin:ripple2d"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["passed"] and len(rep["generators"]) >= 5
    es = [g for g in rep["generators"] if g["generator"].startswith("equation_system(a=0,")][0]
    assert (es["alpha"], es["beta"]) == pytest.approx((0.2, 0.06))


def test_diagnose_report(capsys):
    assert main(["diagnose", "--config", "builtin:ripple2d"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["passed"]
    for c in rep["checks"]:
        assert {"name", "passed"} <= set(c)


def test_shift_search_cli(tmp_path):
    assert main(["shift-search", "--config", "builtin:shift7", "--seeds", "2", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "shift_search.json").read_text())
    assert len(rep["runs"]) == 2
    for r in rep["runs"]:
        assert abs(r["m_estimate"] - 7) <= rep["eps_hat"] + rep["beta"]
        assert r["probes"] <= rep["max_probes"]


def test_bench_zero_noise_all_variants_succeed(tmp_path, capsys):
    assert main(["bench", "--config", "builtin:quadratic2d", "--seeds", "20", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "bench.json").read_text())
    for v in bench_mod.VARIANTS:
        assert rep["table"][v]["success_rate"] == 1.0
    head = (tmp_path / "bench_paths.csv").read_text().split("\n", 1)[0]
    assert head == "step,annealed,fixed_hot,fixed_cold"


def test_bench_budgets_are_matched():
    inst = build_instance(read_config("builtin:ripple2d"))
    rep = bench_mod.bench(inst, 1, budget=20_000)
    assert rep["budget"] == rep["k_max"] * rep["steps_per_epoch"]


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("NOISY_ANNEAL_THREADS", "1")
    assert bench_mod.thread_cap(8) == 1
    monkeypatch.setenv("NOISY_ANNEAL_THREADS", "zero")
    with pytest.raises(ValueError):
        bench_mod.thread_cap(8)
    monkeypatch.delenv("NOISY_ANNEAL_THREADS")
    assert bench_mod.thread_cap(3) == 3


def test_bench_thread_count_does_not_change_results(monkeypatch):
    inst = build_instance(read_config("builtin:ripple2d"))
    monkeypatch.setenv("NOISY_ANNEAL_THREADS", "1")
    a = bench_mod.bench(inst, 3, budget=10_000)
    monkeypatch.setenv("NOISY_ANNEAL_THREADS", "4")
    b = bench_mod.bench(inst, 3, budget=10_000)
    for v in bench_mod.VARIANTS:
        assert a["table"][v]["f_true"] == b["table"][v]["f_true"]
