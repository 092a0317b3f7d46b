"""Time the compiled SGLD kernel against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--steps N] [--repeats K]

Both backends run the same chain on every shipped config; the script checks
that the traces agree before reporting steps per second.
"""
import argparse
import time

import numpy as np

from noisyanneal.backend import compile_problem, get_kernel
from noisyanneal.bench import plan_schedule
from noisyanneal.chains import SgldParams, sgld_run
from noisyanneal.cli import builtin_configs, read_config
from noisyanneal.config import build_instance
from noisyanneal.seeding import generator


def time_backend(inst, params, backend, repeats):
    best = np.inf
    tr = None
    for _ in range(repeats):
        prob = compile_problem(inst.oracle, inst.body, backend)
        t0 = time.perf_counter()
        tr = sgld_run(inst.body, inst.smoothed, inst.oracle, params, inst.x0,
                      (generator(0, "bench-kernels/p"), generator(0, "bench-kernels/z")),
                      ftrue=inst.objective.evaluate, problem=prob)
        best = min(best, time.perf_counter() - t0)
    return best, tr


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=20_000)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args(argv)
    try:
        get_kernel("cython")
        backends = ("python", "cython")
    except ImportError:
        print("compiled kernel not built; timing the fallback only")
        backends = ("python",)
    print(f"{'config':<14}{'backend':<9}{'steps/s':>12}{'speedup':>9}")
    for name in builtin_configs():
        inst = build_instance(read_config(f"builtin:{name}"), mode="practical")
        s, _, _ = plan_schedule(inst, mode="practical")
        eta = s.eta(s.xi(s.J_0))
        params = SgldParams(s.xi(s.J_0), eta, args.steps, s.step_cap_for(eta))
        runs = {b: time_backend(inst, params, b, args.repeats) for b in backends}
        if len(runs) == 2 and not np.allclose(runs["python"][1].X, runs["cython"][1].X, rtol=0, atol=1e-10):
            raise SystemExit(f"{name}: backends disagree")
        base = runs["python"][0]
        for b, (t, _) in runs.items():
            print(f"{name:<14}{b:<9}{args.steps / t:>12.0f}{base / t:>8.1f}x")


if __name__ == "__main__":
    main()
