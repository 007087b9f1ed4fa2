"""Utility metrics for a set of returned heavy hitters."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .device import DeviceDataset
from .engine import Population, RunResult

DEFAULT_WINDOW = 50


@dataclass(frozen=True)
class GlobalDistribution:
    """``weighted[x]`` is the mean over devices of each device's empirical
    frequency of ``x``; ``coverage[x]`` is the fraction of devices holding ``x``."""

    weighted: Mapping[Hashable, float]
    coverage: Mapping[Hashable, float]
    counts: Mapping[Hashable, int] = field(default_factory=dict)

    @classmethod
    def from_population(cls, pop: Population) -> "GlobalDistribution":
        sizes = np.diff(pop.offsets)
        owner = np.repeat(np.arange(pop.n_devices), sizes)
        totals = np.bincount(owner, weights=pop.row_count, minlength=pop.n_devices)
        holders = int((sizes > 0).sum())
        if holders == 0:
            raise ValueError("population holds no data")
        share = pop.row_count / totals[owner]
        V = len(pop.vocab)
        weighted = np.bincount(pop.row_vocab, weights=share, minlength=V) / holders
        coverage = np.bincount(pop.row_vocab, minlength=V) / pop.n_devices
        counts = np.bincount(pop.row_vocab, weights=pop.row_count, minlength=V)
        keys = [w.bits for w in pop.vocab]
        return cls(
            dict(zip(keys, weighted.tolist())),
            dict(zip(keys, coverage.tolist())),
            dict(zip(keys, counts.astype(np.int64).tolist())),
        )

    @classmethod
    def from_counts(cls, devices: Iterable[Mapping[Hashable, int]]) -> "GlobalDistribution":
        """From per-device ``{key: count}`` maps (raw words or encoded bits)."""
        weighted: dict = {}
        coverage: dict = {}
        counts: dict = {}
        n = holders = 0
        for d in devices:
            n += 1
            total = sum(d.values())
            if total == 0:
                continue
            holders += 1
            for k, c in d.items():
                weighted[k] = weighted.get(k, 0.0) + c / total
                coverage[k] = coverage.get(k, 0) + 1
                counts[k] = counts.get(k, 0) + c
        if holders == 0:
            raise ValueError("dataset holds no data")
        return cls(
            {k: v / holders for k, v in weighted.items()},
            {k: v / n for k, v in coverage.items()},
            counts,
        )

    @classmethod
    def from_datasets(cls, datasets: Sequence[DeviceDataset]) -> "GlobalDistribution":
        return cls.from_counts({w.bits: c for w, c in d.words.items()} for d in datasets)

    def ranking(self, by: str = "weighted") -> list:
        """Keys by decreasing mass, ties broken by key order."""
        dist = getattr(self, by)
        return sorted(dist, key=lambda k: (-dist[k], k))


def _mass(dist) -> Mapping:
    return dist.weighted if isinstance(dist, GlobalDistribution) else dist


def _dedupe(H: Iterable) -> list:
    return list(dict.fromkeys(H))


def weight_ratio(H: Iterable, F) -> float:
    """Mass captured by ``H`` over the mass of the true top-``|H|`` items."""
    H = _dedupe(H)
    if not H:
        return 1.0
    dist = _mass(F)
    got = sum(dist.get(x, 0.0) for x in H)
    best = sorted(dist.items(), key=lambda kv: (-kv[1], kv[0]))[: len(H)]
    denom = sum(v for _, v in best)
    if denom <= 0:
        return 1.0 if got <= 0 else 0.0
    return min(1.0, got / denom)


def utility_loss(H: Iterable, F) -> float:
    return 1.0 - weight_ratio(H, F)


def window_marginals(H: Sequence, F, W: int = DEFAULT_WINDOW) -> list[float]:
    """Entry ``i`` sums ``F`` over ``H[max(0, i-W+1) .. i]``."""
    if W < 1:
        raise ValueError("window must be >= 1")
    dist = _mass(F)
    vals = np.array([dist.get(x, 0.0) for x in H], dtype=np.float64)
    csum = np.concatenate([[0.0], np.cumsum(vals)])
    idx = np.arange(len(vals))
    return (csum[idx + 1] - csum[np.maximum(0, idx - W + 1)]).tolist()


def support_of(dataset) -> set:
    if isinstance(dataset, Population):
        return {w.bits for w in dataset.vocab}
    if isinstance(dataset, (set, frozenset)):
        return set(dataset)
    out = set()
    for d in dataset:
        if isinstance(d, DeviceDataset):
            out.update(w.bits for w in d.words)
        else:
            out.update(d)
    return out


def false_positives(H: Iterable, dataset, selected: set | None = None) -> list:
    """Items of ``H`` that no device holds (or, given ``selected``, that no
    device ever selected)."""
    pool = set(selected) if selected is not None else support_of(dataset)
    return [x for x in _dedupe(H) if x not in pool]


def false_positive_ratio(H: Iterable, dataset, selected: set | None = None) -> float:
    H = _dedupe(H)
    if not H:
        return 0.0
    return len(false_positives(H, dataset, selected)) / len(H)


def lambda_accuracy_check(output: Iterable, counts: Mapping, lam: float, threshold: float) -> bool:
    """Every item with count >= threshold + lam is returned and every item with
    count < threshold - lam is not. ``counts`` must cover the whole domain
    (missing keys count as zero)."""
    out = set(output)
    for d, c in counts.items():
        if c >= threshold + lam and d not in out:
            return False
        if c < threshold - lam and d in out:
            return False
    for d in out:
        if d not in counts and 0 < threshold - lam:
            return False
    return True


@dataclass(frozen=True)
class MetricsReport:
    discovered_count: int
    fp_count: int
    fp_ratio: float
    weight_ratio: float
    utility_loss: float
    window_marginals: list
    ordered: list
    coverage_weight_ratio: float = float("nan")

    def as_dict(self) -> dict:
        return {
            "discovered_count": self.discovered_count,
            "fp_count": self.fp_count,
            "fp_ratio": self.fp_ratio,
            "weight_ratio": self.weight_ratio,
            "utility_loss": self.utility_loss,
            "coverage_weight_ratio": self.coverage_weight_ratio,
        }


def order_hitters(H: Iterable, F, estimates: Mapping | None = None) -> list:
    """True mass descending, then estimate descending, then key."""
    dist = _mass(F)
    est = estimates or {}
    return sorted(_dedupe(H), key=lambda x: (-dist.get(x, 0.0), -est.get(x, 0.0), x))


def summarize(
    result: RunResult,
    F: GlobalDistribution,
    dataset,
    W: int = DEFAULT_WINDOW,
    fp_on_selected: bool = False,
) -> MetricsReport:
    H = order_hitters(result.heavy_hitters, F, result.estimates)
    fps = false_positives(H, dataset, result.selected_words if fp_on_selected else None)
    wr = weight_ratio(H, F)
    return MetricsReport(
        discovered_count=len(H) - len(fps),
        fp_count=len(fps),
        fp_ratio=len(fps) / len(H) if H else 0.0,
        weight_ratio=wr,
        utility_loss=1.0 - wr,
        window_marginals=window_marginals(H, F, W),
        ordered=H,
        coverage_weight_ratio=weight_ratio(H, F.coverage),
    )


def true_hitter_count(result: RunResult, dataset) -> int:
    """Returned items that some device actually holds."""
    pool = support_of(dataset)
    return sum(1 for x in _dedupe(result.heavy_hitters) if x in pool)


__all__ = [
    "DEFAULT_WINDOW",
    "GlobalDistribution",
    "MetricsReport",
    "false_positive_ratio",
    "false_positives",
    "lambda_accuracy_check",
    "order_hitters",
    "summarize",
    "support_of",
    "true_hitter_count",
    "utility_loss",
    "weight_ratio",
    "window_marginals",
]
