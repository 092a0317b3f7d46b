"""Budget-matched comparison of annealing against two fixed-temperature chains.

* ``annealed``: the full epoch schedule.
* ``fixed_cold``: the coldest schedule pair ``(ξ̄, η̄)`` for every step.
* ``fixed_hot``: a temperature hot enough to cross the deepest ripple
  barrier, ``1/ξ = 2(α·2λR + β)`` (never colder than ``ξ_0``), with the
  largest step size the schedule uses, ``η_0``.

Each variant's output is the argmin of F̂ along its own steps.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Optional, Sequence

import numpy as np

from .annealing import AnnealConfig, Schedule, anneal_run, build_schedule
from .backend import compilable, compile_problem
from .chains import SgldParams, sgld_run
from .noise import noisy_eval
from .seeding import generator

__all__ = ["VARIANTS", "plan_schedule", "hot_xi", "fixed_params", "run_variant", "bench", "thread_cap"]

VARIANTS = ("annealed", "fixed_hot", "fixed_cold")
CHECKPOINTS = 100


def thread_cap(default: Optional[int] = None) -> int:
    """Worker count, capped by ``NOISY_ANNEAL_THREADS`` when set."""
    n = default or os.cpu_count() or 1
    env = os.environ.get("NOISY_ANNEAL_THREADS")
    if env:
        try:
            n = min(n, max(1, int(env)))
        except ValueError:
            raise ValueError(f"NOISY_ANNEAL_THREADS must be an integer, got {env!r}") from None
    return max(1, n)


def plan_schedule(inst, budget: Optional[int] = None, mode: Optional[str] = None):
    """Schedule for ``inst`` with the total ``budget`` split evenly over the epochs.

    Returns ``(schedule, anneal_config, J_0)``.
    """
    cfg = inst.anneal if mode is None else replace(inst.anneal, mode=mode)
    J0 = float(noisy_eval(inst.oracle, inst.x0))
    s = build_schedule(cfg, inst.body, inst.oracle, inst.smoothed.constants, J0)
    if budget is not None:
        per = max(1, budget // s.k_max)
        cfg = replace(cfg, i_max=per)
        s = build_schedule(cfg, inst.body, inst.oracle, inst.smoothed.constants, J0)
    return s, cfg, J0


def hot_xi(s: Schedule) -> float:
    barrier = 2.0 * (s.alpha * 2.0 * s.lam * s.R + s.beta)
    xi0 = s.xi(s.J_0)
    return xi0 if barrier <= 0 else min(xi0, 1.0 / barrier)


def fixed_params(variant: str, s: Schedule, steps: int) -> SgldParams:
    if variant == "fixed_cold":
        xi, eta = s.xi_bar, s.eta_bar
    elif variant == "fixed_hot":
        xi, eta = hot_xi(s), s.eta(s.xi(s.J_0))
    else:
        raise ValueError(f"not a fixed variant: {variant!r}")
    return SgldParams(xi, eta, steps, s.step_cap_for(eta))


def _best_path(fhat: np.ndarray, ftrue: np.ndarray, marks: np.ndarray) -> np.ndarray:
    """F at the running argmin of F̂, sampled at step indices ``marks``."""
    run = np.minimum.accumulate(fhat)
    # index of the first occurrence of each running minimum
    new = np.r_[True, run[1:] < run[:-1]]
    idx = np.maximum.accumulate(np.where(new, np.arange(len(fhat)), 0))
    return ftrue[idx[marks]]


def run_variant(inst, variant: str, seed: int, s: Schedule, cfg: AnnealConfig, budget: int,
                backend: Optional[str] = None, problem=None) -> dict:
    marks = np.unique(np.linspace(0, budget, CHECKPOINTS + 1).astype(int))
    if variant == "annealed":
        res = anneal_run(inst.body, inst.oracle, inst.smoothed, cfg, inst.x0, (seed, "annealed"),
                         keep_traces=True, backend=backend, schedule=s)
        fh = np.concatenate([t.fhat if k == 0 else t.fhat[1:] for k, t in enumerate(res.traces)])
        ft = np.concatenate([t.f_true if k == 0 else t.f_true[1:] for k, t in enumerate(res.traces)])
        f_out, fh_out = res.f_true, res.f_hat
        steps = res.total_steps
    else:
        p = fixed_params(variant, s, budget)
        tr = sgld_run(inst.body, inst.smoothed, inst.oracle, p, inst.x0,
                      (generator(seed, f"{variant}/langevin"), generator(seed, f"{variant}/gradient")),
                      backend=backend, problem=problem)
        fh, ft = tr.fhat, tr.f_true
        i = tr.i_star
        f_out, fh_out = float(ft[i]), float(fh[i])
        steps = budget
    marks = marks[marks < len(fh)]
    return {
        "variant": variant,
        "seed": seed,
        "f_true": float(f_out),
        "f_hat": float(fh_out),
        "steps": int(steps),
        "path_steps": marks,
        "path": _best_path(fh, ft, marks),
    }


def bench(inst, seeds: int, variants: Sequence[str] = VARIANTS, budget: int = 200_000,
          master_seed: int = 0, backend: Optional[str] = None, workers: Optional[int] = None) -> dict:
    """Run every variant on ``seeds`` seeds and summarize success rates.

    Success means ``F(x̂) ≤ ε̂``. The report also carries the median and
    interquartile range of ``F(x̂)`` and the median best-F trajectory.
    """
    if seeds < 1:
        raise ValueError("seeds must be >= 1")
    bad = set(variants) - set(VARIANTS)
    if bad:
        raise ValueError(f"unknown variant(s): {sorted(bad)}")
    s, cfg, J0 = plan_schedule(inst, budget)
    matched = s.k_max * s.i_max  # the annealer's exact step count
    seed_ids = [int(master_seed) + k for k in range(seeds)]
    jobs = [(v, sd) for v in variants for sd in seed_ids]
    nw = thread_cap(workers)

    def work(job):
        v, sd = job
        # kernel problems hold scratch buffers, so each job gets its own
        problem = compile_problem(inst.oracle, inst.body, backend) if compilable(inst.oracle) else None
        return run_variant(inst, v, sd, s, cfg, matched, backend, problem)

    if nw > 1:
        with ThreadPoolExecutor(nw) as ex:
            results = list(ex.map(work, jobs))
    else:
        results = [work(j) for j in jobs]
    eh = inst.anneal.eps_hat
    table = {}
    paths = {}
    for v in variants:
        rs = [r for r in results if r["variant"] == v]
        f = np.array([r["f_true"] for r in rs])
        q1, q3 = np.percentile(f, [25, 75])
        table[v] = {
            "success_rate": float(np.mean(f <= eh)),
            "successes": int(np.sum(f <= eh)),
            "median_f": float(np.median(f)),
            "iqr_f": float(q3 - q1),
            "f_true": f.tolist(),
        }
        n = min(len(r["path"]) for r in rs)
        paths[v] = (rs[0]["path_steps"][:n], np.median(np.stack([r["path"][:n] for r in rs]), axis=0))
    hot = fixed_params("fixed_hot", s, matched)
    cold = fixed_params("fixed_cold", s, matched)
    return {
        "eps_hat": eh,
        "budget": matched,
        "seeds": seed_ids,
        "k_max": s.k_max,
        "steps_per_epoch": s.i_max,
        "J_0": J0,
        "fixed_hot": {"xi": hot.xi, "eta": hot.eta, "D": hot.D},
        "fixed_cold": {"xi": cold.xi, "eta": cold.eta, "D": cold.D},
        "table": table,
        "paths": paths,
    }


def write_paths_csv(dest, report: dict) -> None:
    """Median best-F trajectories, one column per variant."""
    names = list(report["paths"])
    steps = report["paths"][names[0]][0]
    n = min(len(report["paths"][v][1]) for v in names)
    with open(dest, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(["step"] + names) + "\n")
        for i in range(n):
            fh.write(",".join([str(int(steps[i]))] + [repr(float(report["paths"][v][1][i])) for v in names]) + "\n")


def format_table(report: dict) -> str:
    lines = [f"{'variant':<12}{'success':>10}{'median F':>14}{'IQR F':>14}"]
    for v, row in report["table"].items():
        lines.append(f"{v:<12}{row['success_rate']:>10.2f}{row['median_f']:>14.4g}{row['iqr_f']:>14.4g}")
    return "\n".join(lines)
