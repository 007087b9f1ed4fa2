import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import norm

from prefixhh.encoding import build_fixed_width, build_huffman, encode
from prefixhh.freq_oracle import FrequencyEstimate
from prefixhh.server import (
    PrefixListTooLarge,
    PruneConfig,
    RoundPlan,
    domain_index,
    domain_inverse,
    first_segment_length,
    next_segment_length,
    prune,
    prune_detail,
    remove_finished,
)


def est(values, sigma=1.0):
    return FrequencyEstimate(np.asarray(values, dtype=np.float64), sigma)


def test_domain_index_examples():
    assert domain_index(0, "000") == 0
    assert domain_index(2, "101") == 21
    assert domain_index(0, "") == 0
    with pytest.raises(IndexError):
        domain_index(4, "00", prefix_count=4)


def test_domain_inverse_exhaustive():
    seen = set()
    for p in range(4):
        for bits in ("".join(b) for b in itertools.product("01", repeat=2)):
            i = domain_index(p, bits, 4)
            assert domain_inverse(i, 2) == (p, bits)
            seen.add(i)
    assert seen == set(range(16))


def test_round_plan_helpers():
    plan = RoundPlan(("00", "11"), 2, 1, r=6)
    assert plan.domain_size == 4
    assert plan.index_of("111000") == 3
    assert plan.index_of("010000") is None
    assert plan.prefix_at(3) == "111"
    with pytest.raises(ValueError):
        RoundPlan(("0", "0"), 1, 1)
    with pytest.raises(ValueError):
        RoundPlan(("0",), 1, 6, r=6)


def test_prune_initial_tail_probability():
    out = prune_detail(est([0.0] * 10), 10, PruneConfig())
    assert out.kept.size == 0
    assert out.false_positive_rate == pytest.approx(0.02275, abs=1e-5)


def test_prune_keeps_clear_signal():
    rng = np.random.default_rng(0)
    ratios = []
    for _ in range(100):
        f = rng.standard_normal(1024)
        f[:10] = 20.0
        out = prune_detail(est(f), 1024, PruneConfig())
        assert set(range(10)) <= set(out.kept.tolist())
        ratios.append(out.false_positive_rate * 1014 / out.kept.size)
        assert out.false_positive_rate * 1024 <= 0.5 * out.kept.size
    assert np.mean(ratios) <= 0.5


@given(st.lists(st.floats(-5, 30), min_size=1, max_size=300), st.floats(0.5, 4.0))
def test_prune_postcondition(values, tau0):
    cfg = PruneConfig(tau0=tau0)
    f = np.array(values)
    out = prune_detail(est(f), f.size, cfg)
    assert np.all(f[out.kept] > out.tau)
    assert np.all(f[np.setdiff1d(np.arange(f.size), out.kept)] <= out.tau)
    assert (
        out.kept.size == 0
        or out.false_positive_rate < cfg.e_floor
        or out.false_positive_rate * f.size <= cfg.f_ratio * out.kept.size
    )
    assert prune(est(f), f.size, cfg) == out.kept.tolist()


def test_pure_noise_kept_count_matches_tail():
    rng = np.random.default_rng(2)
    D = 20_000
    kept, expect = [], []
    for _ in range(50):
        out = prune_detail(est(rng.standard_normal(D)), D, PruneConfig())
        kept.append(out.kept.size)
        expect.append(norm.sf(out.tau) * D)
    k, e = np.sum(kept), np.sum(expect)
    assert abs(k - e) <= 3 * np.sqrt(e) + 3


def test_prune_config_validation():
    for bad in (dict(tau0=0), dict(eta=1.0), dict(f_ratio=0)):
        with pytest.raises(ValueError):
            PruneConfig(**bad)
    with pytest.raises(ValueError):
        prune(est([1.0]), 0, PruneConfig())


def test_next_segment_length_examples():
    assert first_segment_length(10**7, 60) == 23
    assert next_segment_length(610, 23, 10**7, 60) == 14
    assert next_segment_length(1, 0, 8, 2) == 2
    assert next_segment_length(0, 5, 100, 60) == 0
    assert next_segment_length(8, 0, 8, 60) == 0
    with pytest.raises(PrefixListTooLarge):
        next_segment_length(9, 0, 8, 60)


@given(st.integers(1, 10**6), st.integers(1, 10**8), st.integers(0, 40), st.integers(1, 40))
def test_next_segment_length_is_maximal(count, P, L, extra):
    r = L + extra
    if count > P:
        with pytest.raises(PrefixListTooLarge):
            next_segment_length(count, L, P, r)
        return
    ell = next_segment_length(count, L, P, r)
    assert count << ell <= P
    assert count << (ell + 1) > P or ell == r - L


def test_remove_finished_examples():
    cb = build_huffman({"a": 5, "b": 3, "c": 1})
    r = 16
    done = encode("ab", cb, r).bits
    n = len(cb.code_for("a") + cb.code_for("b") + cb.end_code)
    open_prefix = encode("abc", cb, r).bits[:n]
    assert open_prefix != done[:n]
    remaining, found = remove_finished([done[:n], open_prefix], cb, set())
    assert remaining == [open_prefix]
    assert found == {done[:n]}
    assert remove_finished([open_prefix], cb, set()) == ([open_prefix], set())
    assert remove_finished([done], None, set()) == ([done], set())


def test_remove_finished_fixed_width_boundaries():
    cb = build_fixed_width("ab", 2)
    bits = encode("ba", cb, 10).bits
    for j in range(1, 11):
        remaining, found = remove_finished([bits[:j]], cb, set())
        if j >= 6:
            assert found == {bits[:6]}
        else:
            assert remaining == [bits[:j]]
