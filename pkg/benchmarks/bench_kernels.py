#!/usr/bin/env python3
"""Benchmark the hot kernels under both backends and check they agree.

Runs one worker subprocess per backend (FRAGILITY_BACKEND=numba / numpy)
so each measures exactly what the dispatch in fragility._kernels ships,
then compares timings and asserts the numerical results match.

Usage:
    python3 benchmarks/bench_kernels.py [--repeat N]

Workloads, sized like a real stochastic-index run on the bundled trial
table (102, 326, 216, 985):

* fisher_p      -- 3721 two-sided exact p-values, one call per shifted
                   table (the per-call path every fragility search hits)
* reversal_grid -- the full 61x61 decision grid in one call
* comp_prob     -- exact reversal probability at k = 10, 20, 30 on top
                   of the grid's prefix sums
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

TABLE = (102, 326, 216, 985)
ALPHA = 0.05
WINDOW = 30  # shifts i, j range over [-WINDOW, WINDOW]
COMP_KS = (10, 20, 30)


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def worker(repeat: int) -> dict:
    import numpy as np

    from fragility._backend import backend_name
    from fragility._kernels import (
        comp_prob,
        fisher_p,
        log_factorials,
        prefix_sums,
        reversal_grid,
    )

    a, b, c, d = TABLE
    lf = log_factorials(a + b + c + d)
    shifts = [(i, j) for i in range(-WINDOW, WINDOW + 1) for j in range(-WINDOW, WINDOW + 1)]

    # warm-up also pays the jit compile; report it separately
    t0 = time.perf_counter()
    fisher_p(lf, a, b, c, d)
    grid = reversal_grid(lf, a, b, c, d, ALPHA, 1, -WINDOW, WINDOW, -WINDOW, WINDOW)
    prefix = prefix_sums(grid)
    comp_prob(lf, prefix, a, b, c, d, COMP_KS[0], True, True, True, True, -WINDOW, -WINDOW)
    warm_s = time.perf_counter() - t0

    def run_fisher():
        return [float(fisher_p(lf, a + i, b - i, c + j, d - j)) for i, j in shifts]

    def run_grid():
        return reversal_grid(lf, a, b, c, d, ALPHA, 1, -WINDOW, WINDOW, -WINDOW, WINDOW)

    fisher_s, pvals = _time(run_fisher, repeat)
    grid_s, grid = _time(run_grid, repeat)
    prefix = prefix_sums(np.asarray(grid))

    comps = {}
    for k in COMP_KS:
        sec, val = _time(
            lambda k=k: float(
                comp_prob(lf, prefix, a, b, c, d, k, True, True, True, True, -WINDOW, -WINDOW)
            ),
            repeat,
        )
        comps[str(k)] = {"seconds": sec, "value": val}

    return {
        "backend": backend_name(),
        "warm_s": warm_s,
        "fisher": {"seconds": fisher_s, "values": pvals},
        "grid": {"seconds": grid_s, "cells": np.asarray(grid).ravel().tolist()},
        "comp": comps,
    }


def spawn(backend: str, repeat: int) -> dict:
    env = dict(os.environ, FRAGILITY_BACKEND=backend)
    proc = subprocess.run(
        [sys.executable, os.path.abspath(__file__), "--worker", "--repeat", str(repeat)],
        env=env,
        capture_output=True,
        text=True,
    )
    if proc.returncode != 0:
        sys.stderr.write(proc.stderr)
        raise SystemExit(f"{backend} worker failed with exit code {proc.returncode}")
    out = json.loads(proc.stdout)
    if out["backend"] != backend:
        raise SystemExit(f"asked for backend {backend!r}, worker ran {out['backend']!r}")
    return out


def check_agreement(nb: dict, np_: dict) -> None:
    pv_nb = nb["fisher"]["values"]
    pv_np = np_["fisher"]["values"]
    worst = max(abs(x - y) / max(x, y, 1e-300) for x, y in zip(pv_nb, pv_np))
    if worst > 1e-9:
        raise SystemExit(f"fisher_p backends disagree: worst relative gap {worst:.3e}")
    if nb["grid"]["cells"] != np_["grid"]["cells"]:
        raise SystemExit("reversal_grid backends disagree")
    for k in COMP_KS:
        x = nb["comp"][str(k)]["value"]
        y = np_["comp"][str(k)]["value"]
        if abs(x - y) > 1e-12 * max(x, y, 1.0):
            raise SystemExit(f"comp_prob(k={k}) backends disagree: {x!r} vs {y!r}")
    print(f"agreement: fisher_p worst relative gap {worst:.2e}; grids identical; "
          f"comp_prob within 1e-12\n")


def report(nb: dict, np_: dict) -> None:
    rows = [
        (f"fisher_p x{(2 * WINDOW + 1) ** 2}", nb["fisher"]["seconds"], np_["fisher"]["seconds"]),
        (f"reversal_grid {2 * WINDOW + 1}x{2 * WINDOW + 1}", nb["grid"]["seconds"], np_["grid"]["seconds"]),
    ]
    for k in COMP_KS:
        rows.append((f"comp_prob k={k}", nb["comp"][str(k)]["seconds"], np_["comp"][str(k)]["seconds"]))

    print(f"{'kernel':<24} {'numba':>12} {'numpy':>12} {'speedup':>9}")
    for name, t_nb, t_np in rows:
        print(f"{name:<24} {t_nb * 1e3:>10.2f}ms {t_np * 1e3:>10.2f}ms {t_np / t_nb:>8.1f}x")
    print(f"\nwarm-up (includes jit compile): numba {nb['warm_s']:.2f}s, "
          f"numpy {np_['warm_s']:.2f}s")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5, help="timing repetitions (best-of)")
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()

    if args.worker:
        json.dump(worker(args.repeat), sys.stdout)
        return

    table = ", ".join(str(x) for x in TABLE)
    print(f"table ({table}), alpha {ALPHA}, shifts in [-{WINDOW}, {WINDOW}]^2, "
          f"best of {args.repeat}\n")
    nb = spawn("numba", args.repeat)
    np_ = spawn("numpy", args.repeat)
    check_agreement(nb, np_)
    report(nb, np_)


if __name__ == "__main__":
    main()
