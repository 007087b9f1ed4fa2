"""Comparison algorithms sharing the engine's trie loop.

* TrieHH / TrieHH++: each device joins a round with probability ``gamma``
  and votes its extended prefix in the clear; prefixes with at least
  ``theta`` votes survive.
* Central Laplace / Gaussian trees: a trusted curator sees the exact
  per-round histogram and adds noise to every coordinate before pruning.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .accountant import compose_advanced, invert_composition
from .device import UNWEIGHTED, SelectionPolicy
from .encoding import Codebook
from .engine import (
    MULTI_DATAPOINT,
    SINGLE_DATAPOINT,
    RoundInput,
    RunConfig,
    RunResult,
    _as_population,
    _run_population,
)
from .freq_oracle import FrequencyEstimate
from .server import PruneConfig, PruneOutcome, prune_detail

LAPLACE = "laplace"
GAUSSIAN = "gaussian"

# one selected point per device per round; replacing it moves two coordinates
L1_SENSITIVITY = 2.0
L2_SENSITIVITY = math.sqrt(2.0)

_CENTRAL_NOISE = 11
RDP_ORDERS = np.concatenate([np.linspace(1.01, 2.0, 100), np.linspace(2.05, 64.0, 1240), np.geomspace(64.5, 4096, 200)])


class InfeasibleTheta(ValueError):
    pass


class RoundBudgetOutOfRange(ValueError):
    """The per-round epsilon falls outside the sampling lemma's range."""


@dataclass(frozen=True)
class TrieHHConfig:
    theta: int
    sampling_rate: float
    rounds: int

    def __post_init__(self):
        if self.theta < 1:
            raise ValueError("theta must be >= 1")
        if not 0 < self.sampling_rate <= 1:
            raise ValueError("sampling_rate must lie in (0, 1]")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")


@dataclass(frozen=True)
class CentralNoiseConfig:
    noise: str
    scale: float
    sensitivity: float | None = None

    def __post_init__(self):
        if self.noise not in (LAPLACE, GAUSSIAN):
            raise ValueError(f"unknown noise {self.noise!r}")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if self.sensitivity is None:
            object.__setattr__(self, "sensitivity", L1_SENSITIVITY if self.noise == LAPLACE else L2_SENSITIVITY)
        if not self.sensitivity > 0:
            raise ValueError("sensitivity must be positive")

    @property
    def std(self) -> float:
        return math.sqrt(2.0) * self.scale if self.noise == LAPLACE else self.scale


@dataclass(frozen=True)
class TreeParams:
    """Shared trie settings for the baselines."""

    dimension_limit: int
    codebook: Codebook | None = None
    selection: SelectionPolicy = SelectionPolicy(UNWEIGHTED)
    deny_list: frozenset = frozenset()
    mode: str = MULTI_DATAPOINT
    seed: int = 0
    segment_schedule: tuple[int, ...] | None = None
    prune: PruneConfig = PruneConfig()
    threads: int | None = None


def _run_config(plan: TreeParams, rounds: int, sampling_rate: float | None = None) -> RunConfig:
    return RunConfig(
        rounds=rounds,
        dimension_limit=plan.dimension_limit,
        epsilon_local=math.inf,
        prune=plan.prune,
        selection=plan.selection,
        deny_list=plan.deny_list,
        mode=plan.mode,
        seed=plan.seed,
        codebook=plan.codebook,
        segment_schedule=plan.segment_schedule,
        sampling_rate=sampling_rate,
        threads=plan.threads,
    )


def _prepare(dataset, cfg: RunConfig):
    pop = _as_population(dataset)
    if cfg.mode == SINGLE_DATAPOINT:
        pop = pop.single_datapoint(cfg.seed)
    return pop


class _VoteThreshold:
    def __init__(self, theta: int):
        self.theta = theta

    def __call__(self, ri: RoundInput):
        votes = ri.histogram[: ri.domain_size]
        kept = np.flatnonzero(votes >= self.theta)
        return votes.astype(np.float64), PruneOutcome(kept, float(self.theta), 0.0), {"theta": self.theta}


def run_triehh(dataset, cfg: TrieHHConfig, plan: TreeParams) -> RunResult:
    run_cfg = _run_config(plan, cfg.rounds, cfg.sampling_rate)
    res = _run_population(_prepare(dataset, run_cfg), run_cfg, math.inf, None, _VoteThreshold(cfg.theta))
    res.metrics["sampling_rate"] = cfg.sampling_rate
    return res


def triehh_sampling_rate(epsilon_agg: float, rounds: int, theta: int) -> float:
    """Rate ``(1 - e^{-eps/T}) / theta`` used for the TrieHH runs.

    Matches the published rates for the comparison settings; the rate does
    not depend on the number of devices.
    """
    return -math.expm1(-epsilon_agg / rounds) / theta


def _c_alpha(alpha: float) -> float:
    return math.log(1.0 / alpha) - 1.0 / (1.0 + alpha)


def triehhpp_alpha(theta: float, delta: float) -> float:
    """Solve ``exp(-C_alpha * theta) = delta`` for alpha in (0, 1]."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if theta <= 0:
        raise ValueError("theta must be positive")
    target = math.log(1.0 / delta) / theta  # C_alpha must equal this
    # C_alpha is strictly decreasing from +inf (alpha -> 0) to -1/2 (alpha = 1)
    if target < _c_alpha(1.0):
        raise InfeasibleTheta(f"no alpha in (0, 1] gives delta={delta} at theta={theta}")
    lo, hi = 1e-300, 1.0
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if _c_alpha(mid) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-17 * hi:
            break
    return 0.5 * (lo + hi)


def triehhpp_sampling_rate(epsilon_round: float, theta: float, delta: float) -> float:
    """``p = alpha * (1 - e^{-eps})`` with alpha from :func:`triehhpp_alpha`."""
    if not 0 < epsilon_round:
        raise ValueError("epsilon_round must be positive")
    if epsilon_round >= 1:
        raise RoundBudgetOutOfRange(f"epsilon_round={epsilon_round:.4g} must be below 1; use more rounds or a smaller budget")
    return triehhpp_alpha(theta, delta) * -math.expm1(-epsilon_round)


def triehhpp_round_budget(epsilon_agg: float, delta: float, rounds: int) -> tuple[float, float]:
    """Per-round (eps, delta) for TrieHH++.

    The per-round epsilon is the largest value whose ``rounds``-fold advanced
    composition (taking the better of basic and advanced) stays within
    ``epsilon_agg``; delta is split evenly. When the advanced bound is the
    one that binds, half of delta is held back as its slack.
    """
    eps_basic = epsilon_agg / rounds
    eps_round = invert_composition(epsilon_agg, rounds, delta / 2.0)
    if eps_round <= eps_basic * (1 + 1e-9):
        return eps_basic, delta / rounds
    return eps_round, delta / (2.0 * rounds)


def run_triehhpp(
    dataset, theta: int, epsilon_agg: float, delta: float, rounds: int, plan: TreeParams
) -> RunResult:
    eps_round, delta_round = triehhpp_round_budget(epsilon_agg, delta, rounds)
    rate = triehhpp_sampling_rate(eps_round, theta, delta_round)
    res = run_triehh(dataset, TrieHHConfig(theta, rate, rounds), plan)
    res.metrics.update(epsilon_round=eps_round, delta_round=delta_round)
    return res


class _CentralNoise:
    def __init__(self, cfg: CentralNoiseConfig, seed: int, prune: PruneConfig):
        self.cfg = cfg
        self.seed = seed
        self.prune = prune

    def __call__(self, ri: RoundInput):
        rng = np.random.default_rng([self.seed, _CENTRAL_NOISE, ri.round_index])
        m = ri.domain_size
        if self.cfg.noise == LAPLACE:
            noise = rng.laplace(0.0, self.cfg.scale, m)
        else:
            noise = rng.normal(0.0, self.cfg.scale, m)
        noisy = ri.histogram[:m] + noise
        outcome = prune_detail(FrequencyEstimate(noisy, self.cfg.std), m, self.prune)
        return noisy, outcome, {"sigma": self.cfg.std, "false_positive_rate": outcome.false_positive_rate}


def run_central(dataset, cfg: CentralNoiseConfig, plan: TreeParams, rounds: int) -> RunResult:
    run_cfg = _run_config(plan, rounds)
    mech = _CentralNoise(cfg, plan.seed, plan.prune)
    res = _run_population(_prepare(dataset, run_cfg), run_cfg, math.inf, None, mech)
    res.metrics.update(noise=cfg.noise, scale=cfg.scale)
    return res


# ---- calibration -----------------------------------------------------------


def rdp_to_dp(rdp: np.ndarray, orders: np.ndarray, delta: float) -> float:
    """Tightest (eps, delta) conversion over the given Renyi orders.

    ``eps = rdp + log((a-1)/a) - (log(delta) + log(a)) / (a-1)``.
    """
    a = np.asarray(orders, dtype=np.float64)
    eps = rdp + np.log((a - 1) / a) - (math.log(delta) + np.log(a)) / (a - 1)
    return float(max(0.0, np.min(eps)))


def gaussian_rdp(orders: np.ndarray, sigma: float, sensitivity: float = L2_SENSITIVITY) -> np.ndarray:
    return np.asarray(orders) * sensitivity**2 / (2.0 * sigma**2)


def laplace_rdp(orders: np.ndarray, scale: float, sensitivity: float = L1_SENSITIVITY) -> np.ndarray:
    """Renyi divergence of the Laplace mechanism at noise ``scale/sensitivity``."""
    a = np.asarray(orders, dtype=np.float64)
    lam = scale / sensitivity
    t1 = np.log(a / (2 * a - 1)) + (a - 1) / lam
    t2 = np.log((a - 1) / (2 * a - 1)) - a / lam
    return np.logaddexp(t1, t2) / (a - 1)


def gaussian_epsilon(sigma: float, rounds: int, delta: float, sensitivity: float = L2_SENSITIVITY) -> float:
    return rdp_to_dp(rounds * gaussian_rdp(RDP_ORDERS, sigma, sensitivity), RDP_ORDERS, delta)


def laplace_epsilon(scale: float, rounds: int, delta: float, sensitivity: float = L1_SENSITIVITY) -> float:
    """Better of RDP composition and advanced composition for ``rounds`` Laplace releases."""
    via_rdp = rdp_to_dp(rounds * laplace_rdp(RDP_ORDERS, scale, sensitivity), RDP_ORDERS, delta)
    via_adv, _ = compose_advanced(sensitivity / scale, 0.0, rounds, delta)
    return min(via_rdp, via_adv)


def _calibrate(eps_of_scale, target: float) -> float:
    hi = 1.0
    while eps_of_scale(hi) > target:
        hi *= 2.0
        if hi > 1e12:
            raise ValueError("cannot reach the target epsilon")
    lo = hi
    while eps_of_scale(lo) <= target:
        lo /= 2.0
    return brentq(lambda x: eps_of_scale(x) - target, lo, hi, xtol=1e-10, rtol=1e-12) * (1 + 1e-9)


def gaussian_sigma_for_budget(epsilon_agg: float, delta: float, rounds: int, sensitivity: float = L2_SENSITIVITY) -> float:
    """Smallest noise std whose composed guarantee is within (epsilon_agg, delta)."""
    return _calibrate(lambda s: gaussian_epsilon(s, rounds, delta, sensitivity), epsilon_agg)


def laplace_scale_for_budget(epsilon_agg: float, delta: float, rounds: int, sensitivity: float = L1_SENSITIVITY) -> float:
    return _calibrate(lambda b: laplace_epsilon(b, rounds, delta, sensitivity), epsilon_agg)


def central_config(noise: str, epsilon_agg: float, delta: float, rounds: int) -> CentralNoiseConfig:
    if noise == LAPLACE:
        return CentralNoiseConfig(LAPLACE, laplace_scale_for_budget(epsilon_agg, delta, rounds))
    if noise == GAUSSIAN:
        return CentralNoiseConfig(GAUSSIAN, gaussian_sigma_for_budget(epsilon_agg, delta, rounds))
    raise ValueError(f"unknown noise {noise!r}")


def distributed_gaussian_sum(n_devices: int, sigma: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Sum of per-device Gaussian shares with variance ``sigma^2 / n``."""
    share = sigma / math.sqrt(n_devices)
    total = np.zeros(size)
    for _ in range(n_devices):
        total += rng.normal(0.0, share, size)
    return total


def with_seed(plan: TreeParams, seed: int) -> TreeParams:
    return dataclasses.replace(plan, seed=seed)


__all__: Sequence[str] = [
    "CentralNoiseConfig",
    "GAUSSIAN",
    "InfeasibleTheta",
    "RoundBudgetOutOfRange",
    "L1_SENSITIVITY",
    "L2_SENSITIVITY",
    "LAPLACE",
    "TreeParams",
    "TrieHHConfig",
    "central_config",
    "distributed_gaussian_sum",
    "gaussian_epsilon",
    "gaussian_sigma_for_budget",
    "laplace_epsilon",
    "laplace_scale_for_budget",
    "rdp_to_dp",
    "run_central",
    "run_triehh",
    "run_triehhpp",
    "triehh_sampling_rate",
    "triehhpp_alpha",
    "triehhpp_round_budget",
    "triehhpp_sampling_rate",
]
