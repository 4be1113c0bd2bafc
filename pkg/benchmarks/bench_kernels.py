"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--sizes 101 201 401] [--repeat 5]

Both paths are called through the same public wrappers with ``impl=``,
so the numbers include the (small) argument-conversion overhead.  The
end-to-end row runs an explicit heat solve in a subprocess per backend,
switched with LOGGRAD_DISABLE_NUMBA.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from loggrad import _kernels

SOLVE_SNIPPET = """
import time
from loggrad import DomainSpec, euclidean, solve_parabolic, _kernels
from loggrad import source as src, samplers
d = DomainSpec((0.0, 0.0), 1.0, 1.0, 0.25, 0.5, 0.125)
ini, bnd = samplers.make_sampler("cosine", d)
h = {h}
solve_parabolic(d, euclidean(2), src.zero(), ini, bnd, scheme="explicit", h=h, dt=h * h / 4)
t = time.perf_counter()
solve_parabolic(d, euclidean(2), src.zero(), ini, bnd, scheme="explicit", h=h, dt=h * h / 4)
print(_kernels.backend(), time.perf_counter() - t)
"""


def best_of(fn, repeat):
    fn()  # warm-up (jit compile)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def bench_size(n, repeat, rng):
    u = 1.0 + rng.random((n, n))
    x = np.linspace(-1, 1, n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    mask = X ** 2 + Y ** 2 < 0.8
    coef = np.full((n, n), 0.2 * (x[1] - x[0]) ** 2)
    lhs = rng.random(n * n)
    rhs = rng.random(n * n) + 0.1
    flat_mask = mask.ravel()
    rows = []
    cases = {
        "stencil d2": lambda impl: _kernels.apply_stencil(u, 1, _kernels.D2_4, 1.0, impl),
        "explicit step": lambda impl: _kernels.explicit_step(u, mask, coef, x[1] - x[0], impl),
        "max ratio": lambda impl: _kernels.masked_max_ratio(lhs, rhs, flat_mask, impl),
    }
    for name, fn in cases.items():
        t_np = best_of(lambda: fn("numpy"), repeat)
        t_nb = best_of(lambda: fn("numba"), repeat) if _kernels.HAVE_NUMBA else float("nan")
        rows.append((name, n, t_np, t_nb))
    return rows


def bench_solve(h):
    out = {}
    for disable in ("1", "0"):
        env = dict(os.environ, LOGGRAD_DISABLE_NUMBA=disable)
        res = subprocess.run([sys.executable, "-c", SOLVE_SNIPPET.format(h=h)], env=env,
                             capture_output=True, text=True, check=True)
        name, secs = res.stdout.split()
        out[name] = float(secs)
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[101, 201, 401])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--solve-h", type=float, default=0.025)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<14} {'n':>5} {'numpy [ms]':>11} {'numba [ms]':>11} {'speedup':>8}")
    for n in args.sizes:
        for name, size, t_np, t_nb in bench_size(n, args.repeat, rng):
            print(f"{name:<14} {size:>5} {1e3 * t_np:>11.3f} {1e3 * t_nb:>11.3f} {t_np / t_nb:>8.1f}")
    solve = bench_solve(args.solve_h)
    print(f"{'explicit solve':<14} {'h=' + str(args.solve_h):>5} {1e3 * solve['numpy']:>11.1f} "
          f"{1e3 * solve['numba']:>11.1f} {solve['numpy'] / solve['numba']:>8.1f}")


if __name__ == "__main__":
    main()
