import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from prefixhh import _kernels
from prefixhh._kernels import fallback, stream_key

needs_compiled = pytest.mark.skipif(_kernels.compiled is None, reason="extension not built")


def ragged(rng, n, max_rows=6):
    sizes = rng.integers(0, max_rows + 1, n)
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    rows = int(offsets[-1])
    return offsets, rng.integers(0, 1000, rows).astype(np.int64), rng.integers(0, 5, rows).astype(np.int64)


def test_uniforms_range_and_order_independence():
    ids = np.arange(10_000)
    u = fallback.uniforms(stream_key(1, 2, 3), ids)
    assert u.min() >= 0 and u.max() < 1
    assert abs(u.mean() - 0.5) < 0.01
    perm = np.random.default_rng(0).permutation(ids)
    assert np.array_equal(fallback.uniforms(stream_key(1, 2, 3), perm), u[perm])
    assert not np.array_equal(fallback.uniforms(stream_key(1, 2, 4), ids), u)


def test_fallback_select_rows_matches_reference():
    rng = np.random.default_rng(3)
    offsets, vocab, weight = ragged(rng, 300)
    u = rng.random(300)
    active = rng.integers(0, 2, 300).astype(np.uint8)
    out = fallback.select_rows(offsets, vocab, weight, u, active)
    for i in range(300):
        a, b = offsets[i], offsets[i + 1]
        w = weight[a:b]
        if not active[i] or w.sum() == 0:
            assert out[i] == -1
            continue
        target = int(u[i] * float(w.sum()))
        j = int(np.searchsorted(np.cumsum(w), target, side="right"))
        assert out[i] == vocab[a + j]


@needs_compiled
@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 400))
def test_backends_agree(seed, n):
    rng = np.random.default_rng(seed)
    offsets, vocab, weight = ragged(rng, n)
    u = fallback.uniforms(seed, np.arange(n))
    active = rng.integers(0, 2, n).astype(np.uint8)
    assert np.array_equal(_kernels.compiled.uniforms(seed, np.arange(n)), u)
    assert np.array_equal(
        _kernels.compiled.select_rows(offsets, vocab, weight, u, active),
        fallback.select_rows(offsets, vocab, weight, u, active),
    )


@pytest.mark.parametrize("threads", [2, 3, 7])
def test_thread_split_is_invisible(threads):
    rng = np.random.default_rng(9)
    n = 5000
    offsets, vocab, weight = ragged(rng, n)
    u = rng.random(n)
    active = np.ones(n, dtype=np.uint8)
    one = _kernels.select_rows(offsets, vocab, weight, u, active, threads=1)
    assert np.array_equal(_kernels.select_rows(offsets, vocab, weight, u, active, threads=threads), one)


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("PREFIXHH_THREADS", "3")
    assert _kernels.thread_count() == 3
    monkeypatch.setenv("PREFIXHH_THREADS", "junk")
    assert _kernels.thread_count() >= 1


def test_backend_name():
    assert _kernels.BACKEND in ("cython", "numpy")
