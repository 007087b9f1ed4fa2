"""Hot kernels with a compiled backend and a numpy fallback.

The compiled extension is used when it imports; setting
``PREFIXHH_PURE_PYTHON=1`` forces the fallback. Both backends return
identical results.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _fallback as fallback
from ._keys import stream_key

try:
    from . import _ckernels as compiled
except ImportError:  # extension not built
    compiled = None

if compiled is not None and not os.environ.get("PREFIXHH_PURE_PYTHON"):
    _impl = compiled
    BACKEND = "cython"
else:
    _impl = fallback
    BACKEND = "numpy"


def uniforms(key: int, ids: np.ndarray) -> np.ndarray:
    return _impl.uniforms(key, ids)


def select_rows(offsets, row_vocab, row_weight, u, active, threads: int = 1) -> np.ndarray:
    """Per-device weighted pick; devices are split into contiguous chunks
    across ``threads`` workers (results do not depend on the split)."""
    n = offsets.size - 1
    if threads <= 1 or n < 2 * threads:
        return _impl.select_rows(offsets, row_vocab, row_weight, u, active)
    bounds = np.linspace(0, n, threads + 1).astype(np.int64)

    def work(k):
        a, b = bounds[k], bounds[k + 1]
        lo, hi = offsets[a], offsets[b]
        return _impl.select_rows(
            offsets[a : b + 1] - lo, row_vocab[lo:hi], row_weight[lo:hi], u[a:b], active[a:b]
        )

    with ThreadPoolExecutor(threads) as pool:
        parts = list(pool.map(work, range(threads)))
    return np.concatenate(parts)


def thread_count() -> int:
    raw = os.environ.get("PREFIXHH_THREADS")
    cap = os.cpu_count() or 1
    if raw:
        try:
            return max(1, min(int(raw), 64))
        except ValueError:
            pass
    return cap


__all__ = ["BACKEND", "compiled", "fallback", "select_rows", "stream_key", "thread_count", "uniforms"]
