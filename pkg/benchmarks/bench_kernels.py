"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]
"""

from __future__ import annotations

import argparse
import json
import platform
import timeit

import numpy as np

from mobmanip import _kernels
from mobmanip.features import KdTree, unpack_descriptors
from mobmanip.planar_pose import _draw_samples


def _cases(rng):
    a = rng.integers(0, 256, size=(500, 32), dtype=np.uint8)
    b = rng.integers(0, 256, size=(500, 32), dtype=np.uint8)
    pts = rng.normal(size=(1000, 16))
    q16 = rng.normal(size=(100, 16))
    tree16 = KdTree(pts)
    tree256 = KdTree(unpack_descriptors(b))
    q256 = unpack_descriptors(a[:100])

    h = np.array([[1.1, 0.05, 20.0], [-0.03, 0.95, -7.0], [1e-4, -2e-4, 1.0]])
    src = rng.uniform(0, 400, size=(500, 2))
    p = np.column_stack([src, np.ones(len(src))]) @ h.T
    dst = p[:, :2] / p[:, 2:] + rng.normal(0, 0.5, size=(500, 2))
    dst[:350] = rng.uniform(0, 400, size=(350, 2))  # 70% outliers keeps the adaptive loop running
    samples = _draw_samples(np.random.default_rng(0), 500, 1000)

    return {
        "hamming 500x500 (2-NN)": lambda: _kernels.hamming_knn2(a, b),
        "kd-tree 1000x16, 100 queries k=2": lambda: tree16.query(q16, 2),
        "kd-tree 500x256 bits, 100 queries k=2": lambda: tree256.query(q256, 2),
        "RANSAC 500 corr, 1000 hypotheses": lambda: _kernels.ransac_search(src, dst, samples, 9.0, 0.99),
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args(argv)

    backends = _kernels.available()
    previous = _kernels.backend()
    results: dict[str, dict[str, float]] = {}
    try:
        for name in backends:
            _kernels.use_backend(name)
            for label, fn in _cases(np.random.default_rng(1)).items():
                fn()  # warm-up
                best = min(timeit.repeat(fn, number=1, repeat=args.repeat))
                results.setdefault(label, {})[name] = best * 1e3
    finally:
        _kernels.use_backend(previous)

    print(f"{platform.machine()} / Python {platform.python_version()} / numpy {np.__version__}")
    header = f"{'kernel':<40}" + "".join(f"{b + ' ms':>12}" for b in backends)
    if len(backends) > 1:
        header += f"{'speedup':>10}"
    print(header)
    for label, times in results.items():
        row = f"{label:<40}" + "".join(f"{times[b]:>12.3f}" for b in backends)
        if "cython" in times and "python" in times:
            row += f"{times['python'] / times['cython']:>9.1f}x"
        print(row)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2, sort_keys=True)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
