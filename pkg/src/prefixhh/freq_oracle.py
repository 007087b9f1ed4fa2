"""One-hot encoding with asymmetric binary randomized response (OHE-BRR).

A report over a domain of size ``m`` is a bit vector of length ``m + 1``;
index ``m`` is the ⊥ slot. Each input bit set to 1 is kept with probability
``alpha1`` and each 0 is flipped on with probability ``alpha0``. A device with
nothing to report (``BOT``) randomizes the all-zeros vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Protocol

import numpy as np


class _Bot:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "BOT"

    def __reduce__(self):
        return (_Bot, ())


BOT = _Bot()

# Constant in the high-probability error bound; a test-calibration choice.
ERROR_BOUND_CONSTANT = 2.0


@dataclass(frozen=True)
class OracleParams:
    epsilon_local: float
    domain_size: int
    alpha0: float
    alpha1: float

    def __post_init__(self):
        if not self.epsilon_local > 0:
            raise ValueError("epsilon_local must be positive")
        if self.domain_size < 1:
            raise ValueError("domain_size must be a positive integer")
        if not 0 < self.alpha0 < self.alpha1 < 1:
            raise ValueError("need 0 < alpha0 < alpha1 < 1")

    @classmethod
    def replacement(cls, epsilon_local: float, domain_size: int) -> "OracleParams":
        """alpha1 = 1/2, alpha0 = 1/(e^eps + 1)."""
        a0 = 1.0 / (math.exp(epsilon_local) + 1.0) if epsilon_local < 700 else 0.0
        return cls(epsilon_local, domain_size, max(a0, 1e-300), 0.5)

    @classmethod
    def deletion(cls, epsilon_local: float, domain_size: int) -> "OracleParams":
        a0 = 1.0 / (math.exp(epsilon_local) + 1.0)
        return cls(epsilon_local, domain_size, a0, 1.0 - a0)

    def with_domain(self, domain_size: int) -> "OracleParams":
        return OracleParams(self.epsilon_local, domain_size, self.alpha0, self.alpha1)


@dataclass(frozen=True)
class AggregateReport:
    counts: np.ndarray  # int64, length m + 1
    n: int

    def __post_init__(self):
        if self.counts.ndim != 1:
            raise ValueError("counts must be a vector")
        if self.n < 0 or (self.counts.size and (self.counts.min() < 0 or self.counts.max() > self.n)):
            raise ValueError("aggregate counts must lie in [0, n]")


@dataclass(frozen=True)
class FrequencyEstimate:
    f_tilde: np.ndarray  # float64, length m
    sigma: float


def randomize(index, params: OracleParams, rng: np.random.Generator) -> np.ndarray:
    m = params.domain_size
    hot = np.zeros(m + 1, dtype=bool)
    if index is not BOT:
        if not isinstance(index, (int, np.integer)) or not 0 <= index <= m:
            raise IndexError(f"index {index!r} outside [0, {m}]")
        hot[index] = True
    u = rng.random(m + 1)
    return (u < np.where(hot, params.alpha1, params.alpha0)).astype(np.uint8)


def output_probability(bits: Iterable[int], index, params: OracleParams) -> float:
    """Exact probability that :func:`randomize` returns ``bits``."""
    p = 1.0
    for j, b in enumerate(bits):
        q = params.alpha1 if (index is not BOT and j == index) else params.alpha0
        p *= q if b else 1.0 - q
    return p


def aggregate(vectors: Iterable[np.ndarray]) -> AggregateReport:
    """Exact coordinatewise sum of privatized vectors (simulated secure sum)."""
    total = None
    n = 0
    for v in vectors:
        total = v.astype(np.int64) if total is None else total + v
        n += 1
    if total is None:
        raise ValueError("no reports to aggregate")
    return AggregateReport(total, n)


def sample_aggregate(
    histogram: np.ndarray, n: int, params: OracleParams, rng: np.random.Generator
) -> AggregateReport:
    """Draw the sum of ``n`` randomized reports in one shot.

    ``histogram[j]`` is the number of reports whose one-hot index is ``j``
    (length ``m + 1``). Coordinates are independent, so coordinate ``j`` of
    the sum is ``Bin(h_j, alpha1) + Bin(n - h_j, alpha0)``; this has the
    same distribution as summing per-device :func:`randomize` outputs.
    """
    h = np.asarray(histogram, dtype=np.int64)
    if h.size != params.domain_size + 1:
        raise ValueError("histogram length must be domain_size + 1")
    if h.sum() > n:
        raise ValueError("histogram holds more reports than participants")
    counts = rng.binomial(h, params.alpha1) + rng.binomial(n - h, params.alpha0)
    return AggregateReport(counts.astype(np.int64), n)


def noise_sigma(params: OracleParams, n: int) -> float:
    a0, a1 = params.alpha0, params.alpha1
    var = max(a0 * (1 - a0), a1 * (1 - a1))
    return math.sqrt(n * var) / (a1 - a0)


def estimate(agg: AggregateReport, params: OracleParams) -> FrequencyEstimate:
    if agg.n < 1:
        raise ValueError("cannot estimate from zero reports")
    m = params.domain_size
    a0, a1 = params.alpha0, params.alpha1
    f = (agg.counts[:m] - agg.n * a0) / (a1 - a0)
    return FrequencyEstimate(f.astype(np.float64), noise_sigma(params, agg.n))


def oracle_error_bound(params: OracleParams, n: int, beta: float, c: float = ERROR_BOUND_CONSTANT) -> float:
    if not 0 < beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    e = math.exp(params.epsilon_local)
    return c * math.sqrt(n * e / (e - 1.0) ** 2 * math.log(1.0 / beta))


class FrequencyOracle(Protocol):
    """What the engine needs from a local randomizer / estimator pair."""

    def params(self, epsilon_local: float, domain_size: int) -> OracleParams: ...

    def randomize(self, index, params: OracleParams, rng: np.random.Generator) -> np.ndarray: ...

    def sample_aggregate(
        self, histogram: np.ndarray, n: int, params: OracleParams, rng: np.random.Generator
    ) -> AggregateReport: ...

    def estimate(self, agg: AggregateReport, params: OracleParams) -> FrequencyEstimate: ...


class OheBrr:
    """OHE-BRR under replacement DP (or deletion DP when ``deletion=True``)."""

    def __init__(self, deletion: bool = False):
        self.deletion = deletion

    def params(self, epsilon_local: float, domain_size: int) -> OracleParams:
        if self.deletion:
            return OracleParams.deletion(epsilon_local, domain_size)
        return OracleParams.replacement(epsilon_local, domain_size)

    randomize = staticmethod(randomize)
    sample_aggregate = staticmethod(sample_aggregate)
    estimate = staticmethod(estimate)
