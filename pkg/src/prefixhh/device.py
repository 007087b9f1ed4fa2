"""On-device data filtering, selection and reporting."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .encoding import EncodedWord
from .freq_oracle import BOT, OracleParams, randomize
from .server import RoundPlan

WEIGHTED = "weighted"
UNWEIGHTED = "unweighted"


@dataclass(frozen=True)
class DeviceDataset:
    """Multiset of encoded words held by one device."""

    words: Mapping[EncodedWord, int]

    def __post_init__(self):
        if any(c < 1 for c in self.words.values()):
            raise ValueError("word counts must be positive")
        object.__setattr__(self, "words", dict(sorted(self.words.items(), key=lambda kv: kv[0].bits)))

    @property
    def total(self) -> int:
        return sum(self.words.values())

    def distribution(self) -> dict[EncodedWord, float]:
        total = self.total
        return {w: c / total for w, c in self.words.items()}


@dataclass(frozen=True)
class SelectionPolicy:
    kind: str = UNWEIGHTED
    condition_on_prefix_list: bool = True

    def __post_init__(self):
        if self.kind not in (WEIGHTED, UNWEIGHTED):
            raise ValueError(f"unknown selection kind {self.kind!r}")


def _allowed(word: EncodedWord, plan: RoundPlan) -> bool:
    return plan.prefix_length == 0 or word.bits[: plan.prefix_length] in plan.positions


def eligible(
    data: DeviceDataset, plan: RoundPlan, policy: SelectionPolicy = SelectionPolicy()
) -> dict[EncodedWord, int]:
    """Words a device may pick this round, with their on-device counts."""
    out = {}
    for word, count in data.words.items():
        if word in plan.deny_list:
            continue
        if policy.condition_on_prefix_list and not _allowed(word, plan):
            continue
        out[word] = count
    return out


def pick_index(weights: np.ndarray, u: float) -> int:
    """Index chosen by the integer-target rule shared with the kernels.

    With ``total = sum(weights)`` and ``t = floor(u * total)``, returns the
    first index whose running sum exceeds ``t``.
    """
    total = int(weights.sum())
    target = int(u * float(total))
    return int(np.searchsorted(np.cumsum(weights), target, side="right"))


def select(data: DeviceDataset, plan: RoundPlan, policy: SelectionPolicy, rng) -> EncodedWord | object:
    """One word (weighted or uniform over distinct words) or BOT."""
    pool = eligible(data, plan, policy)
    if not pool:
        return BOT
    words = list(pool)
    if policy.kind == WEIGHTED:
        weights = np.fromiter(pool.values(), dtype=np.int64, count=len(words))
    else:
        weights = np.ones(len(words), dtype=np.int64)
    return words[pick_index(weights, float(rng.random()))]


def report_index(selected, plan: RoundPlan):
    """Domain index of the selected word's extended prefix (BOT if outside)."""
    if selected is BOT:
        return BOT
    idx = plan.index_of(selected.bits)
    return BOT if idx is None else idx


def report(
    data: DeviceDataset,
    plan: RoundPlan,
    policy: SelectionPolicy,
    params: OracleParams,
    rng: np.random.Generator,
) -> np.ndarray:
    selected = select(data, plan, policy, rng)
    return randomize(report_index(selected, plan), params, rng)


def single_datapoint(data: DeviceDataset, u: float) -> DeviceDataset:
    """Fix one word drawn from the device's empirical distribution."""
    words = list(data.words)
    weights = np.fromiter(data.words.values(), dtype=np.int64, count=len(words))
    return DeviceDataset({words[pick_index(weights, u)]: 1})
