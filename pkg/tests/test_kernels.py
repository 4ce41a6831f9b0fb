"""Backend agreement: the compiled kernels and the numpy fallback must pick
bit-identical splits and distances so model training is backend-independent."""

from __future__ import annotations

import numpy as np
import pytest

from dysec import _kernels_py, kernels

try:
    from dysec import _kernels as _compiled
except ImportError:
    _compiled = None

needs_compiled = pytest.mark.skipif(
    _compiled is None, reason="compiled kernel extension not built"
)


def _brute_gini(x, y):
    best = (False, 0.0, float("-inf"))
    vals = np.unique(x)
    for i in range(len(vals) - 1):
        thr = (vals[i] + vals[i + 1]) / 2
        left, right = y[x <= thr], y[x > thr]

        def side(sub):
            p = int(sub.sum())
            q = len(sub) - p
            return (p * p + q * q) / len(sub)

        score = side(left) + side(right)
        if score > best[2]:
            best = (True, thr, score)
    return best


def test_backend_is_reported():
    assert kernels.BACKEND in ("cython", "python")


@needs_compiled
def test_split_classification_backends_bit_identical():
    rng = np.random.default_rng(5)
    for _ in range(400):
        n = int(rng.integers(2, 80))
        x = rng.choice(rng.normal(size=max(2, n // 3)), size=n)
        y = rng.integers(0, 2, size=n).astype(np.int64)
        assert _compiled.best_split_classification(x, y) == \
            _kernels_py.best_split_classification(x, y)


@needs_compiled
def test_split_regression_backends_bit_identical():
    rng = np.random.default_rng(6)
    for _ in range(400):
        n = int(rng.integers(2, 80))
        x = rng.choice(rng.normal(size=max(2, n // 4)), size=n)
        t = rng.normal(size=n)
        assert _compiled.best_split_regression(x, t) == \
            _kernels_py.best_split_regression(x, t)


@pytest.mark.parametrize("impl", [
    _kernels_py,
    pytest.param(_compiled, marks=needs_compiled),
])
def test_split_matches_brute_force(impl):
    rng = np.random.default_rng(7)
    for _ in range(150):
        n = int(rng.integers(2, 50))
        x = np.round(rng.normal(size=n), 1)
        y = rng.integers(0, 2, size=n).astype(np.int64)
        got = impl.best_split_classification(x, y)
        want = _brute_gini(x, y)
        assert got[0] == want[0]
        if got[0]:
            assert got[2] == pytest.approx(want[2], abs=1e-12)


@pytest.mark.parametrize("impl", [
    _kernels_py,
    pytest.param(_compiled, marks=needs_compiled),
])
def test_constant_column_has_no_split(impl):
    x = np.full(10, 3.0)
    y = np.array([0, 1] * 5, dtype=np.int64)
    valid, _, _ = impl.best_split_classification(x, y)
    assert not valid


@needs_compiled
def test_levenshtein_backends_agree():
    import random

    random.seed(8)
    for _ in range(400):
        a = "".join(random.choice("abcdef") for _ in range(random.randint(0, 14)))
        b = "".join(random.choice("abcdef") for _ in range(random.randint(0, 14)))
        assert _compiled.levenshtein(a, b) == _kernels_py.levenshtein(a, b)


@pytest.mark.parametrize("impl", [
    _kernels_py,
    pytest.param(_compiled, marks=needs_compiled),
])
def test_adjacent_float_values_still_split_both_sides(impl):
    # The midpoint of two adjacent (or denormal) doubles can round up to
    # the right value; the returned threshold must keep the right side
    # non-empty under `x <= threshold`.
    x = np.array([5e-324, 1e-323])
    y = np.array([0, 1], dtype=np.int64)
    valid, threshold, _ = impl.best_split_classification(x, y)
    assert valid
    assert (x <= threshold).sum() == 1
    valid, threshold, _ = impl.best_split_regression(x, y.astype(np.float64))
    assert valid
    assert (x <= threshold).sum() == 1


def test_adjacent_float_training_never_crashes():
    from dysec.models import ModelKind, default_config, train

    rng = np.random.default_rng(0)
    n = 120
    base = 0.1 + np.round(rng.random(n), 15)
    col = np.where(rng.random(n) < 0.5, base, np.nextafter(base, 2.0))
    X = np.column_stack([col, rng.normal(size=n)])
    y = rng.integers(0, 2, size=n)
    y[:3], y[-3:] = 0, 1
    for kind in (ModelKind.DT, ModelKind.RF, ModelKind.GB):
        train(default_config(kind, seed=1), X, y)


def test_env_override_selects_python():
    import os
    import subprocess
    import sys
    from pathlib import Path

    import dysec

    src = str(Path(dysec.__file__).resolve().parent.parent)
    code = "from dysec import kernels; print(kernels.BACKEND)"
    out = subprocess.run(
        [sys.executable, "-c", code],
        capture_output=True,
        text=True,
        env={**os.environ, "PYTHONPATH": src, "DYSEC_KERNELS": "python"},
    )
    assert out.stdout.strip() == "python"
