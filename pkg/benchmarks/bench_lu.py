"""Compare the compiled and pure-Python LU kernels on bordered Jacobians.

Usage::

    python3 benchmarks/bench_lu.py [--repeat 3] [--sizes 400 32 64]

Integer sizes are 1D interval resolutions when >= 100, otherwise square
grids n x n.  For every case the factors from both backends are checked to
be identical before timings are reported.
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from plasmafbp import Mesh, make_spec, tanh_nonlinearity
from plasmafbp.linalg import AVAILABLE_BACKENDS, lu_factor
from plasmafbp.solver import AugmentedState, jacobian


def bordered_jacobian(size: int):
    m = Mesh.interval(1.0, size) if size >= 100 else Mesh.rectangle(1.0, 1.0, size, size)
    spec = make_spec(m, tanh_nonlinearity(), theta="0.1*cos(pi*x)")
    rng = np.random.default_rng(7)
    s = AugmentedState(U=0.3 * rng.standard_normal(m.N), beta=0.1, mu=0.2, xi1=0.5)
    return m, jacobian(spec, s, 1.0, 0.5).assemble()


def time_backend(J, backend: str, repeat: int) -> tuple:
    rhs = np.ones(J.shape[0])
    factor_t, solve_t = [], []
    lu = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        lu = lu_factor(J, backend=backend)
        t1 = time.perf_counter()
        lu.solve(rhs)
        t2 = time.perf_counter()
        factor_t.append(t1 - t0)
        solve_t.append(t2 - t1)
    return lu, statistics.median(factor_t), statistics.median(solve_t)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--sizes", type=int, nargs="+", default=[400, 1600, 32, 64])
    args = ap.parse_args(argv)

    if "compiled" not in AVAILABLE_BACKENDS:
        print("compiled backend not built; only the pure-Python kernels are timed")
    print(f"{'case':>14} {'n':>6} {'nnz':>7} {'backend':>9} {'factor [s]':>11} {'solve [s]':>10} {'fill':>8}")
    for size in args.sizes:
        m, J = bordered_jacobian(size)
        label = f"interval {size}" if m.dim == 1 else f"square {size}x{size}"
        results = {}
        for backend in AVAILABLE_BACKENDS:
            lu, tf, ts = time_backend(J, backend, args.repeat)
            results[backend] = (lu, tf)
            print(f"{label:>14} {J.shape[0]:>6} {J.nnz:>7} {backend:>9} {tf:>11.4f} {ts:>10.5f} {lu.fill:>8}")
        if len(results) == 2:
            a, b = results["compiled"][0], results["python"][0]
            same = all(
                np.array_equal(getattr(a, f), getattr(b, f))
                for f in ("Lp", "Li", "Lx", "Up", "Ui", "Ux", "udiag", "pinv")
            )
            speedup = results["python"][1] / results["compiled"][1]
            print(f"{'':>14} identical factors: {same}; compiled speed-up {speedup:.1f}x")


if __name__ == "__main__":
    main()
