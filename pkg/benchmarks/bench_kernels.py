"""Compare the numba and numpy kernel backends on simulated leagues.

    python benchmarks/bench_kernels.py [--games 760 5000 20000] [--repeat 5]

Prints the median wall time per call of each kernel and of a full Model VI
fit, plus the largest relative difference between the two backends.
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from goalhazard import _kernels, coxfit
from goalhazard.design import make_design
from goalhazard.model import expand_preset
from goalhazard.simulate import default_params, simulate_dataset


def timed(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times), out


def max_rel_diff(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = np.maximum(np.abs(b), 1e-300)
    return float(np.max(np.abs(a - b) / scale)) if a.size else 0.0


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--games", type=int, nargs="+", default=[760, 5000, 20000])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = ["numpy"] + (["numba"] if _kernels.numba_available() else [])
    spec = expand_preset("VI")
    beta = np.array([1.9, 0.15, -0.6, 0.011, 0.16])
    print(f"{'games':>6} {'rows':>6} {'kernel':<14}" + "".join(f"{b:>12}" for b in backends)
          + f"{'speedup':>9} {'max rel diff':>13}")
    for n in args.games:
        design = make_design(simulate_dataset(n, default_params(), seed=0), spec)
        h = np.full(design.ev_time.size, 0.01)
        jobs = {
            "risk_sums": lambda: _kernels.risk_sums(design, beta, True, 2)[1:4],
            "row_cumhaz": lambda: (_kernels.row_cumhaz(design, beta, h, h),),
            "frailty_blk": lambda: _kernels.frailty_blocks(design, beta, h),
            "fit VI": lambda: (coxfit.fit(design).beta,),
        }
        for name, job in jobs.items():
            times, outs = {}, {}
            for b in backends:
                _kernels.set_backend(b)
                job()  # warm-up (numba compilation, caches)
                times[b], outs[b] = timed(job, args.repeat)
            diff = max(max_rel_diff(x, y) for x, y in zip(outs[backends[-1]], outs["numpy"]))
            speed = times["numpy"] / times[backends[-1]]
            print(f"{n:>6} {design.n:>6} {name:<14}"
                  + "".join(f"{times[b] * 1e3:>10.2f}ms" for b in backends)
                  + f"{speed:>8.1f}x {diff:>13.1e}")
    _kernels.set_backend(backends[-1])


if __name__ == "__main__":
    main()
