"""``noisy-anneal`` command line.

Exit codes: 0 success, 1 bad configuration, 2 infeasible theory schedule,
3 a diagnostic or noise check failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import bench as bench_mod
from .annealing import InfeasibleSchedule, anneal_run, binary_search_shift, compute_k_max
from .chains import write_trace_csv
from .config import ConfigError, RunConfig, build_instance, load_config, parse_config
from .noise import (
    affine_components,
    make_equation_system_oracle,
    make_oracle,
    make_ripple_noise,
    noisy_eval,
    verify_noise_bounds,
)
from .seeding import generator

log = logging.getLogger("noisyanneal")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_CHECK = 0, 1, 2, 3
BUILTIN = "builtin:"


def builtin_configs() -> list[str]:
    root = resources.files("noisyanneal") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def read_config(spec: Optional[str]) -> RunConfig:
    """Load ``spec``: a path, ``builtin:NAME``, or ``None`` for defaults."""
    if spec is None:
        return RunConfig()
    if spec.startswith(BUILTIN):
        name = spec[len(BUILTIN):]
        res = resources.files("noisyanneal") / "configs" / f"{name}.toml"
        if not res.is_file():
            raise ConfigError(f"no built-in config {name!r}; have {', '.join(builtin_configs())}")
        return parse_config(res.read_text(encoding="utf-8"))
    return load_config(spec)


def _apply_flags(cfg: RunConfig, args) -> RunConfig:
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be a 64-bit unsigned integer")
        cfg = replace(cfg, seed=args.seed)
    if args.mode is not None:
        cfg = replace(cfg, anneal=replace(cfg.anneal, mode=args.mode))
    out = cfg.output
    if args.out is not None:
        out = replace(out, dir=args.out)
    if args.emit_coords:
        out = replace(out, emit_coords=True)
    return replace(cfg, output=out)


def _dump(obj) -> str:
    def conv(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, tuple):
            return list(o)
        raise TypeError(f"not serializable: {type(o).__name__}")

    return json.dumps(obj, indent=2, default=conv, allow_nan=True)


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_dump(obj) + "\n", encoding="utf-8")


def _anneal_cfg(inst, cfg: RunConfig):
    """Anneal settings with ``budget`` split evenly over the epochs."""
    ac = inst.anneal
    if cfg.anneal.budget is not None:
        J0 = float(noisy_eval(inst.oracle, inst.x0))
        k = ac.k_max or compute_k_max(J0, ac.D_frak, ac.eps)
        ac = replace(ac, i_max=max(1, cfg.anneal.budget // k))
    return ac


# -- subcommands ---------------------------------------------------------------


def cmd_run(cfg: RunConfig, args) -> int:
    inst = build_instance(cfg)
    ac = _anneal_cfg(inst, cfg)
    res = anneal_run(inst.body, inst.oracle, inst.smoothed, ac, inst.x0, (cfg.seed, "run"), keep_traces=True)
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trace_csv(out / cfg.output.trace, res.traces, emit_coords=cfg.output.emit_coords)
    summary = {
        "final_fhat": res.f_hat,
        "final_f": res.f_true,
        "x_hat": res.x_hat,
        "epochs": len(res.epochs),
        "steps": res.total_steps,
        "seed": cfg.seed,
        "config_hash": cfg.hash(),
        "mode": ac.mode,
        "eps_hat": ac.eps_hat,
        "sigma": inst.smoothed.sigma,
        "sigma_formula": inst.smoothed.sigma_formula,
        "wall_time": res.wall_time,
        "per_epoch": [
            {"k": e.k, "xi": e.xi, "eta": e.eta, "D": e.D, "i_max": e.i_max, "J": e.J,
             "J_hat": e.J_hat, "best_fhat": e.best_fhat, "best_f": e.best_f, "acceptance": e.acceptance}
            for e in res.epochs
        ],
    }
    _write_json(out / cfg.output.summary, summary)
    print(f"final F_hat = {res.f_hat:.6g}  final F = {res.f_true:.6g}  "
          f"epochs = {len(res.epochs)}  steps = {res.total_steps}")
    return EXIT_OK


def cmd_bench(cfg: RunConfig, args) -> int:
    inst = build_instance(cfg)
    budget = cfg.anneal.budget or 200_000
    report = bench_mod.bench(inst, args.seeds or 20, budget=budget, master_seed=cfg.seed)
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    bench_mod.write_paths_csv(out / "bench_paths.csv", report)
    data = {k: v for k, v in report.items() if k != "paths"}
    data["config_hash"] = cfg.hash()
    _write_json(out / "bench.json", data)
    print(bench_mod.format_table(report))
    return EXIT_OK


def _jhat_grid(s) -> list:
    hi = max(s.J_0, s.D_frak)
    grid = np.geomspace(s.D_frak, hi, 6) if hi > s.D_frak else np.array([s.D_frak])
    return [float(v) for v in grid]


def cmd_schedule(cfg: RunConfig, args) -> int:
    inst = build_instance(cfg)
    ac = _anneal_cfg(inst, cfg)
    s, _, J0 = bench_mod.plan_schedule(replace(inst, anneal=ac))
    table = []
    for J in _jhat_grid(s):
        xi = s.xi(J)
        table.append({"J_hat": J, "xi": xi, "eta": s.eta(xi)})
    if s.mode == "theory":
        if s.i_max_digits is not None and s.i_max_digits > 18:
            i_max = {"digits": s.i_max_digits}
        else:
            i_max = int(s.i_max_theory)
    else:
        i_max = s.i_max
    out = {
        "mode": s.mode,
        "d": s.d,
        "R": s.R,
        "lambda": s.lam,
        "alpha": s.alpha,
        "beta": s.beta,
        "eps": s.eps,
        "eps_hat": s.eps_hat,
        "D_frak": s.D_frak,
        "delta": s.delta,
        "J_0": J0,
        "r_prime_eff": s.r_prime_eff,
        "table": table,
        "xi_bar": s.xi_bar,
        "r": s.r,
        "D": s.D,
        "eta_bar": s.eta_bar,
        "eta_bar_dagger": s.eta_bar_dagger,
        "omega": s.omega,
        "B": s.B,
        "B_prime": s.B_prime,
        "k_max": s.k_max,
        "i_max": i_max,
        "sigma": inst.smoothed.sigma,
        "constants": s.constants.as_dict(),
    }
    print(_dump(out))
    return EXIT_OK


def _check(name: str, passed: bool, **values) -> dict:
    return {"name": name, "passed": bool(passed), **values}


def cmd_diagnose(cfg: RunConfig, args) -> int:
    from .diagnostics import build_grid_measure, cheeger_stability_check, ratio_sandwich_check

    inst = build_instance(cfg)
    ac = _anneal_cfg(inst, cfg)
    s, ac, _ = bench_mod.plan_schedule(replace(inst, anneal=ac))
    checks = []

    # schedule identities
    lhs = [s.xi(J) * (s.eps / 5) * max(J, s.D_frak) for J in _jhat_grid(s)]
    rhs = 4 * s.d * s.log_term
    err = max(abs(v - rhs) / rhs for v in lhs)
    checks.append(_check("schedule_xi_identity", err <= 1e-12, max_rel_error=err, bound=1e-12))
    r_err = abs(s.r - s.delta / (s.xi_bar * s.constants.lambda_tilde)) / s.r
    checks.append(_check("schedule_r_identity", ac.r is not None or r_err <= 1e-12, max_rel_error=r_err, bound=1e-12))
    if ac.D is None:
        D_err = abs(s.D - math.sqrt(2 * s.eta_bar * s.d)) / s.D
        checks.append(_check("schedule_D_identity", D_err <= 1e-12, max_rel_error=D_err, bound=1e-12))
    xi_max = max(s.xi(J) for J in _jhat_grid(s))
    checks.append(_check("schedule_xi_below_xi_bar", xi_max <= s.xi_bar * (1 + 1e-12), xi_max=xi_max, bound=s.xi_bar))

    # noise envelope
    rep = verify_noise_bounds(inst.oracle, inst.body, 20_000, generator(cfg.seed, "diagnose/noise"))
    checks.append(_check("noise_envelope", rep.ok, max_violation=rep.max_violation, bound=0.0,
                         samples=rep.samples))

    # ratio sandwich along a short run
    t = s.D_frak
    if t >= 5 * s.beta:
        short = replace(ac, i_max=min(ac.i_max, 2000))
        res = anneal_run(inst.body, inst.oracle, inst.smoothed, short, inst.x0, (cfg.seed, "diagnose"),
                         keep_traces=True)
        X = np.concatenate([tr.X for tr in res.traces])
        fh = np.concatenate([tr.fhat for tr in res.traces])
        pick = np.unique(np.linspace(0, len(X) - 1, 40).astype(int))
        sw = ratio_sandwich_check(inst.smoothed, X[pick], fh[pick], t, 4000,
                                  generator(cfg.seed, "diagnose/sandwich"))
        checks.append(_check("ratio_sandwich", sw["passed"], t=t, bound=5.0, **{k: v for k, v in sw.items() if k != "passed"}))
    else:
        checks.append(_check("ratio_sandwich", True, skipped="D_frak < 5 beta"))

    # Cheeger stability on a grid (d <= 2)
    if inst.body.dimension <= 2:
        n = 256 if inst.body.dimension == 1 else 24
        xi = min(s.xi(s.J_0), 50.0)
        mF = build_grid_measure(inst.body, inst.objective.evaluate, xi, n)
        mH = build_grid_measure(inst.body, lambda x: noisy_eval(inst.oracle, x) - inst.oracle.offset, xi, n)
        N = float(np.nanmax(np.abs(mF.values - mH.values)[mF.mask]))
        st = cheeger_stability_check(mF, mH, N, xi)
        checks.append(_check("cheeger_stability", st.passed, xi=xi, N=N, c_f=st.c_f, c_fhat=st.c_fhat,
                             factor=st.factor, bound=st.factor * st.c_f,
                             family="intervals" if n == 256 else "rectangles"))

    ok = all(c["passed"] for c in checks)
    report = {"passed": ok, "config_hash": cfg.hash(), "seed": cfg.seed, "checks": checks}
    text = _dump(report)
    print(text)
    if args.out is not None:
        _write_json(Path(cfg.output.dir) / "diagnose.json", report)
    return EXIT_OK if ok else EXIT_CHECK


def shipped_oracles(inst, seed: int) -> dict:
    """Every bundled noise generator, plus the configured oracle."""
    body, obj = inst.body, inst.objective
    d = body.dimension
    out = {"config": inst.oracle}
    for a, b in ((0.3, 1e-3), (0.05, 0.01)):
        psi, phi = make_ripple_noise(a, b, 0.1, seed, d)
        out[f"ripple(alpha={a},beta={b})"] = make_oracle(obj, psi, phi, a, b)
    out["noiseless"] = make_oracle(obj)
    A = np.eye(d)
    xs = obj.minimizer
    comps, grads = affine_components(A, A @ xs)
    out["equation_system(a=0,b=0.1)"] = make_equation_system_oracle(comps, 0.0, 0.1, xs, seed=seed, gradients=grads)
    out["equation_system(a=0.05,b=0.05)"] = make_equation_system_oracle(comps, 0.05, 0.05, xs, seed=seed, gradients=grads)
    return out


def cmd_verify_noise(cfg: RunConfig, args) -> int:
    inst = build_instance(cfg)
    n = 100_000
    rows = []
    for name, orc in shipped_oracles(inst, cfg.seed).items():
        rep = verify_noise_bounds(orc, inst.body, n, generator(cfg.seed, f"verify-noise/{name}"))
        rows.append({"generator": name, "alpha": orc.alpha, "beta": orc.beta, "max_violation": rep.max_violation,
                     "min_psi_margin": rep.min_psi_margin, "samples": rep.samples, "passed": rep.ok})
    ok = all(r["passed"] for r in rows)
    print(_dump({"passed": ok, "generators": rows}))
    return EXIT_OK if ok else EXIT_CHECK


def cmd_shift_search(cfg: RunConfig, args) -> int:
    inst = build_instance(cfg)
    a = cfg.anneal
    J_raw = float(noisy_eval(inst.oracle, inst.x0))
    lo = a.shift_lo if a.shift_lo is not None else 0.0
    hi = a.shift_hi if a.shift_hi is not None else J_raw
    if not hi > lo:
        raise ConfigError("shift bracket must satisfy shift_hi > shift_lo")
    eh = inst.anneal.eps_hat
    max_probes = max(1, math.ceil(math.log2((hi - lo) / eh))) if hi - lo > eh else 0
    probes = a.shift_budget if a.shift_budget is not None else max_probes
    seeds = [cfg.seed + k for k in range(args.seeds or 1)]
    runs = []
    for sd in seeds:
        r = binary_search_shift(inst.oracle, inst.smoothed, inst.body, inst.oracle.beta, inst.anneal, (lo, hi),
                                probes, inst.x0, sd, probe_budget=a.budget)
        runs.append({"seed": sd, "m_estimate": r["m_estimate"], "bracket": r["bracket"], "probes": len(r["probes"]),
                     "x_hat": r["x_hat"], "trail": r["probes"]})
        print(f"seed {sd}: m_estimate = {r['m_estimate']:.6g} after {len(r['probes'])} probes")
    out = {"bounds": [lo, hi], "eps_hat": eh, "beta": inst.oracle.beta, "max_probes": max_probes,
           "config_hash": cfg.hash(), "runs": runs}
    if args.out is not None:
        _write_json(Path(cfg.output.dir) / "shift_search.json", out)
    else:
        print(_dump(out))
    return EXIT_OK


COMMANDS = {
    "run": (cmd_run, "anneal once; write a trace CSV and a summary JSON"),
    "bench": (cmd_bench, "compare annealing with fixed-temperature chains"),
    "schedule": (cmd_schedule, "print the computed parameter table as JSON"),
    "diagnose": (cmd_diagnose, "run quick consistency checks; JSON report"),
    "verify-noise": (cmd_verify_noise, "check noise envelopes of the bundled generators"),
    "shift-search": (cmd_shift_search, "bisect for an unknown minimum value"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="TOML run configuration, or builtin:NAME (" + ", ".join(builtin_configs()) + ")")
    common.add_argument("--seed", type=int, help="64-bit master seed (overrides the config)")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")
    common.add_argument("--mode", choices=("theory", "practical"))
    common.add_argument("--seeds", type=int, help="number of seeds for bench and shift-search")
    common.add_argument("--emit-coords", action="store_true", help="add coordinate columns to trace CSVs")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="noisy-anneal", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, helptext) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=helptext, description=helptext)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seeds is not None and args.seeds < 1:
        parser.error("--seeds must be >= 1")
    fn = COMMANDS[args.command][0]
    try:
        cfg = _apply_flags(read_config(args.config), args)
        return fn(cfg, args)
    except InfeasibleSchedule as exc:
        print(f"error: infeasible theory schedule: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
