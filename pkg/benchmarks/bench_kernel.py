"""Compare the compiled and pure-Python simplex kernels.

Times ``solve_lp`` on random feasible LPs of a few sizes and one short SDDP
training run with each kernel swapped in. Run with ``python3 benchmarks/bench_kernel.py``.
"""
import argparse
import time

import numpy as np

from ambisddp import _kernel
from ambisddp.instances import random_instance
from ambisddp.lp import LpProblem, solve_lp
from ambisddp.sddp import SolverConfig, run


def random_lp(rng, m, n):
    A = rng.integers(-4, 5, (m, n)).astype(float)
    x0 = rng.uniform(0, 2, n)
    rhs = A @ x0 + rng.uniform(0, 1, m)
    return LpProblem(rng.integers(-3, 6, n).astype(float), A, ["<="] * m, rhs, upper=np.full(n, 4.0))


def timed(kernel, fn, repeats):
    orig = _kernel.iterate
    _kernel.iterate = kernel
    try:
        best = np.inf
        for _ in range(repeats):
            t0 = time.perf_counter()
            out = fn()
            best = min(best, time.perf_counter() - t0)
    finally:
        _kernel.iterate = orig
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args(argv)
    if _kernel.compiled_iterate is None:
        raise SystemExit("compiled kernel not built; run pip install -e . --no-build-isolation")
    kernels = {"cython": _kernel.compiled_iterate, "python": _kernel.python_iterate}
    print(f"{'case':<22}{'cython s':>12}{'python s':>12}{'speedup':>10}")
    for m, n in [(10, 15), (40, 60), (120, 160)]:
        rng = np.random.default_rng(m)
        lps = [random_lp(rng, m, n) for _ in range(20)]
        t = {}
        vals = {}
        for name, k in kernels.items():
            t[name], vals[name] = timed(k, lambda: [solve_lp(p).objective for p in lps], args.repeats)
        assert np.allclose(vals["cython"], vals["python"])
        print(f"{f'20 LPs {m}x{n}':<22}{t['cython']:>12.4f}{t['python']:>12.4f}{t['python'] / t['cython']:>10.1f}")
    model = random_instance(0, 3, 2, 4, False)
    cfg = SolverConfig(variant="drr_c", seed=0, stall_iters=20)
    t = {}
    lbs = {}
    for name, k in kernels.items():
        t[name], (_, log) = timed(k, lambda: run(model, 0.5, cfg), 1)
        lbs[name] = log.lower_bound
    assert lbs["cython"] == lbs["python"]
    print(f"{'sddp drr_c T=3':<22}{t['cython']:>12.4f}{t['python']:>12.4f}{t['python'] / t['cython']:>10.1f}")


if __name__ == "__main__":
    main()
