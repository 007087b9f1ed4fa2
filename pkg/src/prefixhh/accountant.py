"""Per-round local epsilon from an aggregate (epsilon, delta) budget.

Pipeline per round: Poisson subsampling of the local guarantee, then
amplification by shuffling among the participating devices, then advanced
composition over all rounds. A binary search finds the largest local epsilon
that keeps the composed guarantee inside the budget.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

SEARCH_LOW = 1e-4
SEARCH_HIGH = 64.0
DEFAULT_TOLERANCE = 1e-3

SHUFFLE_BOUND = "shuffle-clones-closed-form+advanced-composition"

# Published local epsilons for N = 1.6e6 devices and delta = 1e-6, obtained
# with a numerical shuffle bound plus RDP composition. Keyed by (eps_agg, T).
# Only used as a side-by-side reference; our closed-form bound is looser.
REFERENCE_N = 1_600_000
REFERENCE_DELTA = 1e-6
REFERENCE_EPSILON_LOCAL = {
    (0.25, 1): 6.36, (0.25, 2): 6.05, (0.25, 3): 5.79, (0.25, 4): 5.63, (0.25, 5): 5.35, (0.25, 6): 5.31,
    (0.5, 1): 7.18, (0.5, 2): 6.96, (0.5, 3): 6.73, (0.5, 4): 6.48, (0.5, 5): 6.33, (0.5, 6): 6.26,
    (1.0, 1): 8.03, (1.0, 2): 7.73, (1.0, 3): 7.58, (1.0, 4): 7.39, (1.0, 5): 7.03, (1.0, 6): 7.018,
}


def reference_epsilon_local(budget: "PrivacyBudget") -> float | None:
    if budget.n_devices != REFERENCE_N or budget.delta != REFERENCE_DELTA or budget.sampling_rate != 1.0:
        return None
    return REFERENCE_EPSILON_LOCAL.get((float(budget.epsilon_agg), budget.rounds))


class BudgetTooTight(ValueError):
    pass


class AmplificationOutOfRange(UserWarning):
    """Local epsilon outside the validity domain of the shuffle bound."""


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon_agg: float
    delta: float
    rounds: int
    n_devices: int
    sampling_rate: float = 1.0

    def __post_init__(self):
        if not self.epsilon_agg > 0:
            raise ValueError("epsilon_agg must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.rounds < 1 or self.n_devices < 1:
            raise ValueError("rounds and n_devices must be >= 1")
        if not 0 < self.sampling_rate <= 1:
            raise ValueError("sampling_rate must lie in (0, 1]")
        if self.delta >= 1.0 / self.n_devices:
            warnings.warn(f"delta={self.delta} is not below 1/N={1.0 / self.n_devices}", stacklevel=3)

    @property
    def expected_cohort(self) -> int:
        return max(1, round(self.sampling_rate * self.n_devices))


@dataclass(frozen=True)
class AccountantResult:
    epsilon_local: float
    achieved_epsilon_agg: float
    bound_name: str = SHUFFLE_BOUND


def shuffle_validity_limit(delta_round: float, n: int) -> float:
    """Largest local epsilon the closed-form shuffle bound covers."""
    return math.log(n / (16.0 * math.log(2.0 / delta_round))) if n > 16.0 * math.log(2.0 / delta_round) else -math.inf


def amplify_shuffle(epsilon_local: float, delta_round: float, n: int) -> float:
    if n <= 0:
        raise ValueError("n must be positive")
    if epsilon_local > shuffle_validity_limit(delta_round, n):
        warnings.warn(
            f"epsilon_local={epsilon_local:.4g} is outside the shuffle bound's range for n={n}",
            AmplificationOutOfRange,
            stacklevel=2,
        )
        return epsilon_local
    e = math.exp(epsilon_local)
    factor = 4.0 * math.sqrt(2.0 * math.log(4.0 / delta_round)) / math.sqrt((e + 1.0) * n) + 4.0 / n
    return math.log1p((e - 1.0) * factor)


def compose_advanced(epsilon_round: float, delta_round: float, rounds: int, delta_slack: float) -> tuple[float, float]:
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    eps = epsilon_round
    basic = rounds * eps
    advanced = math.sqrt(2.0 * rounds * math.log(1.0 / delta_slack)) * eps + rounds * eps * math.expm1(eps)
    return min(basic, advanced), rounds * delta_round + delta_slack


def amplify_subsample(epsilon: float, gamma: float) -> float:
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    if gamma == 1:
        return epsilon
    return math.log1p(gamma * math.expm1(epsilon))


def _achieved(epsilon_local: float, budget: PrivacyBudget) -> float:
    T = budget.rounds
    delta_round = budget.delta / (2 * T)
    eps = amplify_subsample(epsilon_local, budget.sampling_rate)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AmplificationOutOfRange)
        eps = amplify_shuffle(eps, delta_round, budget.expected_cohort)
    eps_total, _ = compose_advanced(eps, delta_round, T, budget.delta / 2)
    return eps_total


def achieved_epsilon_agg(epsilon_local: float, budget: PrivacyBudget) -> float:
    """Aggregate epsilon spent when every round uses ``epsilon_local``."""
    return _achieved(epsilon_local, budget)


def solve_local_epsilon(budget: PrivacyBudget, tolerance: float = DEFAULT_TOLERANCE) -> AccountantResult:
    """Largest local epsilon whose composed guarantee fits ``budget``.

    The returned value is within ``tolerance`` of the feasibility boundary.
    """
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    target = budget.epsilon_agg
    lo, hi = SEARCH_LOW, SEARCH_HIGH
    if _achieved(lo, budget) > target:
        raise BudgetTooTight(
            f"epsilon_agg={target} is unreachable even at epsilon_local={SEARCH_LOW}"
        )
    if _achieved(hi, budget) <= target:
        return AccountantResult(hi, _achieved(hi, budget))
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        if _achieved(mid, budget) <= target:
            lo = mid
        else:
            hi = mid
    return AccountantResult(lo, _achieved(lo, budget))


def invert_composition(epsilon_agg: float, rounds: int, delta_slack: float, tolerance: float = 1e-12) -> float:
    """Largest per-round epsilon whose ``rounds``-fold composition stays within ``epsilon_agg``."""
    lo, hi = 0.0, epsilon_agg
    while hi - lo > tolerance * max(1.0, epsilon_agg):
        mid = 0.5 * (lo + hi)
        if compose_advanced(mid, 0.0, rounds, delta_slack)[0] <= epsilon_agg:
            lo = mid
        else:
            hi = mid
    return lo
