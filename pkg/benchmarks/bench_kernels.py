#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Times the hot inner loops on reference-sized arrays and (optionally) a
full fixed-point solve with each backend.  The same comparison can be
reproduced end to end by running the CLI with ``VLANDAU_NUMBA=0``.

Usage:
    python3 benchmarks/bench_kernels.py [--repeat N] [--solve]
"""

import argparse
import time

import numpy as np

from vlandau import kernels as K
from vlandau.config import RunConfig


def _timeit(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def _reference_case():
    """Work arrays shaped like the reference run (nx=64, nv=129, nt=176):
    one flattened particle per phase-space node."""
    cfg = RunConfig()
    rng = np.random.default_rng(0)
    nt = cfg.nt
    npart = cfg.nx * cfg.nv
    half = cfg.nx // 2
    tgrid = cfg.time_grid()
    return {
        "cfg": cfg,
        "cre": 1e-4 * rng.standard_normal((nt, half + 1)),
        "cim": 1e-4 * rng.standard_normal((nt, half + 1)),
        "x": rng.uniform(0, 2 * np.pi, npart),
        "v": rng.uniform(-cfg.v_max, cfg.v_max, npart),
        "dX": 1e-4 * rng.standard_normal((nt, npart)),
        "pos": rng.uniform(0, 2 * np.pi, (nt, npart)),
        "wf": rng.uniform(0.1, 1.0, npart),
        "g": rng.standard_normal((nt, npart)),
        "times": tgrid.times,
        "dt": tgrid.dt,
    }


def _kernel_benches(case):
    cfg = case["cfg"]
    nx = cfg.nx
    dx = 2 * np.pi / nx
    nk = nx // 2 + 1
    alpha, beta = K.exp_cell_weights(1.0, case["dt"])
    return {
        "eval_rows": lambda: K.eval_rows(
            case["cre"], case["cim"], case["x"], case["v"], case["times"],
            case["dX"]),
        "corr_fourier": lambda: K.corr_fourier(
            case["wf"], case["x"], case["v"], case["times"], case["dX"], nk),
        "suffix_trapz_moment": lambda: K.suffix_trapz_moment(
            case["g"], case["dt"]),
        "suffix_weighted": lambda: K.suffix_weighted(case["g"], alpha, beta),
        "cic_density": lambda: K.cic_density(case["wf"], case["pos"], nx, dx),
    }


def _full_solve(cfg):
    from vlandau.scattering import picard_solve
    picard_solve(cfg.profile_spec(), cfg.damping_params(), 0.0,
                 cfg.time_grid(), cfg.phase_grid(), keep_tables=False)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3,
                    help="timing repetitions per entry (best is kept)")
    ap.add_argument("--solve", action="store_true",
                    help="also time a full reference fixed-point solve")
    args = ap.parse_args()

    if not K._HAVE_NUMBA:
        print("numba is not importable; only the numpy backend is timed")

    case = _reference_case()
    rows = []
    for name, fn in _kernel_benches(case).items():
        K.use_numba(False)
        t_np = _timeit(fn, args.repeat)
        entry = [name, t_np, None]
        if K.use_numba(True):
            fn()                        # compile outside the timer
            entry[2] = _timeit(fn, args.repeat)
        rows.append(entry)

    if args.solve:
        K.use_numba(False)
        t_np = _timeit(lambda: _full_solve(case["cfg"]), 1)
        entry = ["picard_solve (full)", t_np, None]
        if K.use_numba(True):
            _full_solve(case["cfg"])    # warm the JIT cache
            entry[2] = _timeit(lambda: _full_solve(case["cfg"]),
                               max(1, args.repeat - 1))
        rows.append(entry)

    K.use_numba(True)
    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'numpy':>10}  {'numba':>10}  {'speedup':>8}")
    for name, t_np, t_nb in rows:
        if t_nb is None:
            print(f"{name:<{width}}  {t_np * 1e3:>8.2f}ms  {'-':>10}  "
                  f"{'-':>8}")
        else:
            print(f"{name:<{width}}  {t_np * 1e3:>8.2f}ms  "
                  f"{t_nb * 1e3:>8.2f}ms  {t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
