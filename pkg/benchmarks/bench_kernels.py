"""Compiled vs numpy kernels on representative sizes.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--csv out.csv]

Prints one row per (kernel, size) with the median time of each backend,
the speedup, and the max abs difference between their outputs.
"""

import argparse
import csv
import sys
import timeit

import numpy as np

from hibcd import _pykernels
from hibcd.linalg import build_spatial_operator

try:
    from hibcd import _ckernels
except ImportError:
    _ckernels = None


def _cases():
    rng = np.random.default_rng(0)
    for side, N in ((32, 4), (64, 5), (256, 10)):
        G = build_spatial_operator(side, side, 11, 1.7, 4)
        S = np.ascontiguousarray(rng.random((N, G.L)))
        yield (f"apply_G {N}x{side}^2", "csr_gather",
               (S, G.indptr, G.indices, G.weights))
        T = np.ascontiguousarray(rng.random((N, G.L_H)))
        yield (f"apply_Gt {N}x{side // 4}^2", "csr_gather",
               (T, G.t_indptr, G.t_indices, G.t_weights))
    for N, L in ((4, 1024), (10, 14400), (20, 65536)):
        V = np.ascontiguousarray(rng.standard_normal((N, L)))
        yield f"simplex {N}x{L}", "project_simplex_columns", (V,)
    for n in (32, 64, 128):
        M = np.ascontiguousarray(rng.standard_normal((n, n)))
        yield f"power_pair {n}x{n} (200 it)", "power_pair", (M, np.ones(n), 0.0, 200)


def _outputs(res):
    return res[:3] if isinstance(res, tuple) else (res,)


def _maxdiff(a, b):
    return max(float(np.max(np.abs(np.asarray(x) - np.asarray(y))))
               for x, y in zip(_outputs(a), _outputs(b)))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--csv")
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled kernels are not built; only numpy timings are shown", file=sys.stderr)
    rows = []
    for label, name, inputs in _cases():
        fpy = getattr(_pykernels, name)
        t_py = min(timeit.repeat(lambda: fpy(*inputs), number=1, repeat=args.repeat))
        row = {"kernel": label, "numpy_ms": 1e3 * t_py, "cython_ms": float("nan"),
               "speedup": float("nan"), "max_abs_diff": float("nan")}
        if _ckernels is not None:
            fc = getattr(_ckernels, name)
            t_c = min(timeit.repeat(lambda: fc(*inputs), number=1, repeat=args.repeat))
            row.update(cython_ms=1e3 * t_c, speedup=t_py / t_c,
                       max_abs_diff=_maxdiff(fc(*inputs), fpy(*inputs)))
        rows.append(row)
    print(f"{'kernel':<30}{'numpy[ms]':>11}{'cython[ms]':>12}{'speedup':>9}{'max|diff|':>11}")
    for r in rows:
        print(f"{r['kernel']:<30}{r['numpy_ms']:>11.3f}{r['cython_ms']:>12.3f}"
              f"{r['speedup']:>9.2f}{r['max_abs_diff']:>11.1e}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
