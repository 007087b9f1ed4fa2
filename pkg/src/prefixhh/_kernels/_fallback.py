"""Pure numpy implementations of the hot kernels.

Bit-for-bit identical to the compiled versions in ``_ckernels.pyx``.
"""

from __future__ import annotations

import numpy as np

from ._keys import GOLDEN, M1, M2

_GOLDEN = np.uint64(GOLDEN)
_M1 = np.uint64(M1)
_M2 = np.uint64(M2)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def uniforms(key: int, ids: np.ndarray) -> np.ndarray:
    """Counter-based uniforms in [0, 1): one per id, independent of order."""
    ids = np.asarray(ids, dtype=np.int64).astype(np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(key) + (ids + np.uint64(1)) * _GOLDEN
        z = _mix(z)
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def select_rows(
    offsets: np.ndarray,
    row_vocab: np.ndarray,
    row_weight: np.ndarray,
    u: np.ndarray,
    active: np.ndarray,
) -> np.ndarray:
    """Pick one row per device with probability proportional to its weight.

    Device ``i`` owns rows ``offsets[i]:offsets[i+1]``. Returns the chosen
    row's vocabulary id, or -1 when the device is inactive or all its
    weights are zero.
    """
    n = offsets.size - 1
    out = np.full(n, -1, dtype=np.int64)
    if row_weight.size == 0:
        return out
    cum = np.cumsum(row_weight, dtype=np.int64)
    cum0 = np.concatenate(([0], cum))
    base = cum0[offsets[:-1]]
    total = cum0[offsets[1:]] - base
    ok = (total > 0) & (active != 0)
    target = (u[ok] * total[ok].astype(np.float64)).astype(np.int64)
    rows = np.searchsorted(cum, base[ok] + target, side="right")
    out[ok] = row_vocab[rows]
    return out
