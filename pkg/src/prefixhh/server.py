"""Per-round server logic: domain indexing, adaptive thresholding, finished
word extraction and adaptive segment length selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import norm

from .encoding import Codebook, EncodedWord, finished_length
from .freq_oracle import FrequencyEstimate


class PrefixListTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class RoundPlan:
    """What the server broadcasts to devices at the start of a round.

    ``prefix_list`` holds distinct bitstrings of length ``prefix_length``,
    sorted. In the first round it is ``("",)`` and the prefix filter is
    vacuous.
    """

    prefix_list: tuple[str, ...]
    prefix_length: int
    segment_length: int
    deny_list: frozenset = frozenset()
    round_index: int = 1
    r: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "prefix_list", tuple(self.prefix_list))
        object.__setattr__(self, "deny_list", frozenset(self.deny_list))
        if len(set(self.prefix_list)) != len(self.prefix_list):
            raise ValueError("prefixes must be distinct")
        if any(len(p) != self.prefix_length for p in self.prefix_list):
            raise ValueError("all prefixes must have length prefix_length")
        if self.segment_length < 0:
            raise ValueError("segment_length must be >= 0")
        if self.r is not None and self.prefix_length + self.segment_length > self.r:
            raise ValueError("prefix_length + segment_length exceeds r")

    @classmethod
    def first_round(cls, segment_length: int, deny_list: Iterable = (), r: int | None = None) -> "RoundPlan":
        return cls(("",), 0, segment_length, frozenset(deny_list), 1, r)

    @cached_property
    def positions(self) -> dict[str, int]:
        return {p: i for i, p in enumerate(self.prefix_list)}

    @property
    def domain_size(self) -> int:
        return len(self.prefix_list) << self.segment_length

    def index_of(self, bits: str) -> int | None:
        """Domain index of the extended prefix of ``bits``, or None."""
        pos = self.positions.get(bits[: self.prefix_length])
        if pos is None:
            return None
        suffix = bits[self.prefix_length : self.prefix_length + self.segment_length]
        return domain_index(pos, suffix, len(self.prefix_list))

    def prefix_at(self, index: int) -> str:
        pos, suffix = domain_inverse(index, self.segment_length)
        return self.prefix_list[pos] + suffix


@dataclass(frozen=True)
class PruneConfig:
    tau0: float = 2.0
    f_ratio: float = 0.5
    eta: float = 0.9
    e_floor: float = 1e-12

    def __post_init__(self):
        if not self.tau0 > 0:
            raise ValueError("tau0 must be positive")
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1)")
        if not self.f_ratio > 0:
            raise ValueError("f_ratio must be positive")


@dataclass(frozen=True)
class PruneOutcome:
    kept: np.ndarray  # sorted domain indices
    tau: float
    false_positive_rate: float  # final E

    @property
    def expected_false_positives_per_bin(self) -> float:
        return self.false_positive_rate


def domain_index(prefix_position: int, suffix_bits: str, prefix_count: int | None = None) -> int:
    s = len(suffix_bits)
    if prefix_position < 0 or (prefix_count is not None and prefix_position >= prefix_count):
        raise IndexError(f"prefix position {prefix_position} out of range")
    value = int(suffix_bits, 2) if s else 0
    return (prefix_position << s) + value


def domain_inverse(index: int, segment_length: int) -> tuple[int, str]:
    if index < 0:
        raise IndexError("negative domain index")
    pos = index >> segment_length
    value = index & ((1 << segment_length) - 1)
    return pos, format(value, f"0{segment_length}b") if segment_length else ""


def prune_detail(estimates: FrequencyEstimate, domain_size: int, cfg: PruneConfig) -> PruneOutcome:
    """Adaptive threshold search.

    Starts at ``tau0`` and shrinks the per-bin false-positive probability
    ``E`` geometrically until the expected number of false positives over the
    domain is at most ``f_ratio`` times the number of kept bins.
    """
    if domain_size < 1:
        raise ValueError("domain_size must be >= 1")
    f = np.asarray(estimates.f_tilde, dtype=np.float64)
    sigma = float(estimates.sigma)
    tau = cfg.tau0
    E = float(norm.sf(tau))
    candidates = np.flatnonzero(f > tau * sigma)
    # Thresholds only grow from here, so later passes scan the sorted survivors.
    cand_values = np.sort(f[candidates])
    kept_count = cand_values.size
    while kept_count > 0 and E >= cfg.e_floor and cfg.f_ratio * kept_count < E * domain_size:
        E *= cfg.eta
        tau = float(norm.isf(E))
        kept_count = cand_values.size - int(np.searchsorted(cand_values, tau * sigma, side="right"))
    kept = candidates[f[candidates] > tau * sigma]
    return PruneOutcome(kept, tau, E)


def prune(estimates: FrequencyEstimate, domain_size: int, cfg: PruneConfig) -> list[int]:
    return prune_detail(estimates, domain_size, cfg).kept.tolist()


def remove_finished(
    kept_prefixes: Sequence[str], cb: Codebook | None, discovered: set
) -> tuple[list[str], set]:
    """Move prefixes that spell out a whole encoded word into ``discovered``.

    A prefix is finished when greedy decoding reaches END and only zero
    padding follows. Discovered entries are stored as the bits up to and
    including END.
    """
    discovered = set(discovered)
    if cb is None:
        return list(kept_prefixes), discovered
    remaining = []
    for p in kept_prefixes:
        n = finished_length(p, cb)
        if n is None:
            remaining.append(p)
        else:
            discovered.add(p[:n])
    return remaining, discovered


def next_segment_length(prefix_count: int, prefix_length: int, P: int, r: int) -> int:
    if prefix_count < 0:
        raise ValueError("prefix_count must be >= 0")
    if prefix_count == 0:
        return 0
    if prefix_count > P:
        raise PrefixListTooLarge(f"{prefix_count} prefixes exceed the dimension limit {P}")
    ell = int(math.floor(math.log2(P / prefix_count)))
    # guard against floating error at exact powers of two
    while prefix_count << (ell + 1) <= P:
        ell += 1
    while ell > 0 and prefix_count << ell > P:
        ell -= 1
    return min(ell, r - prefix_length)


def first_segment_length(P: int, r: int) -> int:
    return next_segment_length(1, 0, P, r)


def canonical_word(bits: str, r: int) -> EncodedWord:
    """Pad a finished prefix back to the full encoded length."""
    return EncodedWord(bits + "0" * (r - len(bits)))


@dataclass
class RoundStats:
    round_index: int
    prefix_count: int
    prefix_length: int
    segment_length: int
    domain_size: int
    participants: int
    tau_final: float
    kept: int
    finished: int
    empirical_fp: int
    extras: dict = field(default_factory=dict)
