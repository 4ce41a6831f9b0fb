"""Backend selection for the hot kernels.

Prefers the compiled extension and falls back to the numpy implementation
when it was not built.  ``DYSEC_KERNELS=python`` forces the fallback, which
the benchmark uses to compare the two.
"""

from __future__ import annotations

import os

from dysec import _kernels_py

if os.environ.get("DYSEC_KERNELS", "").lower() == "python":
    _impl = _kernels_py
else:
    try:
        from dysec import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_py

BACKEND: str = _impl.IMPLEMENTATION

best_split_classification = _impl.best_split_classification
best_split_regression = _impl.best_split_regression
levenshtein = _impl.levenshtein
