import numpy as np
import pytest
from hypothesis import given, strategies as st

from prefixhh.device import DeviceDataset
from prefixhh.encoding import EncodedWord
from prefixhh.engine import Population, RunConfig, run
from prefixhh.freq_oracle import OheBrr
from prefixhh.metrics import (
    GlobalDistribution,
    false_positive_ratio,
    false_positives,
    lambda_accuracy_check,
    order_hitters,
    summarize,
    true_hitter_count,
    utility_loss,
    weight_ratio,
    window_marginals,
)

F = {"a": 0.5, "b": 0.3, "c": 0.2}


def test_weight_ratio_examples():
    assert weight_ratio(["a", "c"], F) == pytest.approx(0.875)
    assert weight_ratio(["a", "b"], F) == 1.0
    assert weight_ratio(["x", "y"], F) == 0.0
    assert weight_ratio([], F) == 1.0
    assert utility_loss(["a", "c"], F) == pytest.approx(0.125)
    assert weight_ratio(["a", "a", "c"], F) == pytest.approx(0.875)


def test_window_examples():
    assert window_marginals(["a", "b", "c"], F, 2) == pytest.approx([0.5, 0.8, 0.5])
    assert window_marginals(["a", "b", "c"], F, 1) == pytest.approx([0.5, 0.3, 0.2])
    assert window_marginals(["a", "b", "c"], F, 50)[-1] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        window_marginals(["a"], F, 0)


@given(st.dictionaries(st.text("abcdef", min_size=1, max_size=2), st.floats(0, 1), min_size=2), st.data())
def test_weight_ratio_properties(dist, data):
    keys = sorted(dist)
    H = data.draw(st.lists(st.sampled_from(keys + ["zz"]), unique=True, min_size=1))
    wr = weight_ratio(H, dist)
    assert 0 <= wr <= 1
    assert window_marginals(H, dist, len(H))[-1] == pytest.approx(sum(dist.get(x, 0) for x in H))
    zero = [x for x in H if dist.get(x, 0) == 0]
    spare = [k for k in keys if k not in H]
    if zero and spare:
        best = max(spare, key=lambda k: dist[k])
        swapped = [best if x == zero[0] else x for x in H]
        assert weight_ratio(swapped, dist) >= wr - 1e-12


def test_false_positive_examples():
    data = [{"a": 1, "b": 2}, {"c": 1}]
    assert false_positive_ratio(["a", "b", "c", "zz"], data) == 0.25
    assert false_positive_ratio(["a", "c"], data) == 0.0
    assert false_positive_ratio([], data) == 0.0
    assert false_positives(["a", "b"], data, selected={"a"}) == ["b"]


def test_global_distribution():
    d = GlobalDistribution.from_counts([{"a": 3, "b": 1}, {"a": 1}])
    assert d.weighted == pytest.approx({"a": 0.875, "b": 0.125})
    assert sum(d.weighted.values()) == pytest.approx(1.0)
    assert d.coverage == {"a": 1.0, "b": 0.5}
    assert d.ranking() == ["a", "b"]
    with pytest.raises(ValueError):
        GlobalDistribution.from_counts([{}])


def test_population_and_dataset_distributions_agree():
    A, B, C = (EncodedWord(b) for b in ("0001", "0010", "1000"))
    ds = [DeviceDataset({A: 2, B: 2}), DeviceDataset({C: 1}), DeviceDataset({A: 1, C: 3})]
    pop = Population.from_datasets(ds)
    x, y = GlobalDistribution.from_population(pop), GlobalDistribution.from_datasets(ds)
    assert x.weighted == pytest.approx(y.weighted)
    assert x.coverage == pytest.approx(y.coverage)
    assert x.counts == y.counts


def test_lambda_accuracy_trivial_cases():
    counts = {"a": 50, "b": 10, "c": 0}
    assert lambda_accuracy_check([], counts, 100, 20)
    assert lambda_accuracy_check(["a"], counts, 0, 20)
    assert not lambda_accuracy_check(["b"], counts, 0, 20)
    assert not lambda_accuracy_check([], counts, 0, 20)


def test_noiseless_run_is_exact_thresholding():
    rng = np.random.default_rng(0)
    codes = rng.choice(256, 4000, p=np.r_[[0.4, 0.2, 0.1], np.full(253, 0.3 / 253)])
    pop = Population.from_codes([{int(c): 1} for c in codes], 8)
    res = run(pop, RunConfig(rounds=1, dimension_limit=256, epsilon_local=30.0, oracle=OheBrr(deletion=True)))
    st_ = res.per_round[0]
    thr = st_.tau_final * st_.extras["sigma"]
    counts = {format(i, "08b"): int(c) for i, c in enumerate(np.bincount(codes, minlength=256))}
    assert lambda_accuracy_check(res.heavy_hitters, counts, 0, thr)


def test_summarize_and_ordering():
    A, B, C = (EncodedWord(b) for b in ("0001", "0010", "1000"))
    ds = [DeviceDataset({A: 3}), DeviceDataset({A: 1, B: 1}), DeviceDataset({C: 1})]
    pop = Population.from_datasets(ds)
    F_ = GlobalDistribution.from_population(pop)
    assert order_hitters(["1111", "0010", "0001"], F_) == ["0001", "0010", "1111"]
    res = run(pop, RunConfig(rounds=1, dimension_limit=16, epsilon_local=30.0, oracle=OheBrr(deletion=True)))
    rep = summarize(res, F_, pop)
    assert rep.utility_loss == pytest.approx(1 - rep.weight_ratio)
    # each device reports one word, so only selected words can surface
    assert rep.fp_count == 0 and set(rep.ordered) == res.selected_words
    assert true_hitter_count(res, pop) == len(res.selected_words) >= 2
    assert set(rep.as_dict()) >= {"fp_ratio", "weight_ratio"}
