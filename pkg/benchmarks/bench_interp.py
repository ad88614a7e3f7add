"""Benchmark: compiled trig-evaluation kernel vs the numpy fallback.

The off-grid evaluation of band-limited fields (flow-map integration's inner
loop) is the one hot spot with a compiled implementation.  This script times
both backends over a few problem sizes and prints the speedup, so the
build-or-not decision stays measurable.

Run:  python benchmarks/bench_interp.py
"""

import time

import numpy as np

from pglab import _kernels
from pglab._kernels import evaluate_modes, reference
from pglab.field import Torus, random_band_limited
from pglab.lagrangian import _band_coefficients


def _setup(dim, N, npts, seed=7):
    tor = Torus(dim, 2.0 * np.pi, N)
    rng = np.random.Generator(np.random.Philox(seed))
    f = random_band_limited(tor, rng, N // 3, ncomp=dim)
    coef, kax = _band_coefficients(f.values, tor)
    pts = rng.uniform(0.0, tor.side_length, size=(npts, dim))
    return coef, kax, np.ascontiguousarray(pts)


def _time(fn, *args, repeats=5):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    print(f"compiled kernel built: {_kernels.COMPILED_AVAILABLE}")
    print(f"active backend: {_kernels.BACKEND}")
    cases = [(2, 32, 1024), (2, 64, 4096), (3, 32, 512), (3, 32, 4096)]
    print(f"{'case':>18} {'numpy':>10} {'compiled':>10} {'speedup':>8} {'max diff':>10}")
    for dim, N, npts in cases:
        coef, kax, pts = _setup(dim, N, npts)
        t_np, out_np = _time(evaluate_modes, coef, kax, pts, reference)
        if _kernels.COMPILED_AVAILABLE:
            t_cy, out_cy = _time(evaluate_modes, coef, kax, pts, _kernels._compiled)
            diff = float(np.abs(out_np - out_cy).max())
            print(f"{dim}D N={N:<3} pts={npts:<5} {t_np*1e3:9.2f}ms {t_cy*1e3:9.2f}ms "
                  f"{t_np/t_cy:7.1f}x {diff:10.2e}")
        else:
            print(f"{dim}D N={N:<3} pts={npts:<5} {t_np*1e3:9.2f}ms {'n/a':>10} "
                  f"{'n/a':>8} {'n/a':>10}")


if __name__ == "__main__":
    main()
