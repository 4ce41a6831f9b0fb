#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Times the two hot paths (per-node split search, edit distance) on both
backends and a full random-forest training run end to end::

    python benchmarks/bench_kernels.py

Force the fallback everywhere with ``DYSEC_KERNELS=python``.
"""

from __future__ import annotations

import random
import string
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from dysec import _kernels_py  # noqa: E402

try:
    from dysec import _kernels as _compiled
except ImportError:
    _compiled = None


def timeit(fn, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_split(impl, X, y):
    def run():
        for j in range(X.shape[1]):
            impl.best_split_classification(X[:, j], y)
            impl.best_split_regression(X[:, j], y.astype(np.float64))
    return timeit(run)


def bench_levenshtein(impl, pairs):
    def run():
        for a, b in pairs:
            impl.levenshtein(a, b)
    return timeit(run)


def bench_forest(backend_name):
    import importlib
    import os

    os.environ["DYSEC_KERNELS"] = backend_name
    import dysec.kernels as kernels

    importlib.reload(kernels)
    import dysec.models as models

    importlib.reload(models)
    rng = np.random.default_rng(0)
    X = rng.normal(size=(800, 36))
    y = (X[:, 0] + 0.5 * rng.normal(size=800) > 0).astype(np.int64)
    config = models.default_config(models.ModelKind.RF, seed=1)
    elapsed = timeit(lambda: models.train(config, X, y), repeat=3)
    return kernels.BACKEND, elapsed


def main():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(4000, 24))
    y = rng.integers(0, 2, size=4000).astype(np.int64)
    random.seed(7)
    pairs = [
        (
            "".join(random.choices(string.ascii_lowercase + "-_", k=random.randint(4, 24))),
            "".join(random.choices(string.ascii_lowercase + "-_", k=random.randint(4, 24))),
        )
        for _ in range(3000)
    ]

    rows = []
    py_split = bench_split(_kernels_py, X, y)
    py_lev = bench_levenshtein(_kernels_py, pairs)
    rows.append(("python", py_split, py_lev))
    if _compiled is not None:
        cy_split = bench_split(_compiled, X, y)
        cy_lev = bench_levenshtein(_compiled, pairs)
        rows.append(("cython", cy_split, cy_lev))

    print(f"{'backend':<8} {'split 4000x24 (s)':>18} {'levenshtein 3000 (s)':>22}")
    for name, split_s, lev_s in rows:
        print(f"{name:<8} {split_s:>18.4f} {lev_s:>22.4f}")
    if _compiled is not None:
        print(f"\nspeedup: split {py_split / cy_split:.1f}x, "
              f"levenshtein {py_lev / cy_lev:.1f}x")

    print("\nrandom forest, 800x36, 100 trees:")
    for backend in ("python", "cython") if _compiled is not None else ("python",):
        name, elapsed = bench_forest(backend)
        print(f"{name:<8} {elapsed:>10.3f} s")


if __name__ == "__main__":
    main()
