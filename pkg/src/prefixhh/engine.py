"""End-to-end simulation of the iterative prefix-tree protocol.

Devices are held in flat arrays (:class:`Population`) so that a round over
tens of thousands of devices is a handful of vectorized passes plus one call
into the selection kernel. Randomness is counter based: the uniform a device
uses in round ``t`` depends only on ``(seed, device_id, t)``, so results do
not depend on how devices are split across threads.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _kernels
from ._kernels._keys import mix64
from .accountant import AccountantResult, PrivacyBudget, solve_local_epsilon
from .device import UNWEIGHTED, WEIGHTED, DeviceDataset, SelectionPolicy
from .encoding import Codebook, EncodedWord
from .freq_oracle import BOT, FrequencyOracle, OheBrr, aggregate
from .server import (
    PrefixListTooLarge,
    PruneConfig,
    PruneOutcome,
    RoundStats,
    canonical_word,
    first_segment_length,
    next_segment_length,
    prune_detail,
    remove_finished,
)

log = logging.getLogger(__name__)

SINGLE_DATAPOINT = "single_datapoint"
MULTI_DATAPOINT = "multi_datapoint"

# stream tags for counter-based randomness
_SELECT = 1
_PARTICIPATE = 2
_AGGREGATE = 3
_SINGLE = 4
_DEVICE_NOISE = 5

MAX_R = 63


@dataclass(frozen=True)
class Population:
    """All devices' word multisets as flat arrays.

    Device ``i`` owns rows ``offsets[i]:offsets[i+1]``; each row is a distinct
    word (index into ``vocab``) with its on-device count. ``vocab`` is sorted
    by bits, so row order within a device matches sorted word order.
    """

    r: int
    vocab: tuple[EncodedWord, ...]
    vocab_codes: np.ndarray
    offsets: np.ndarray
    row_vocab: np.ndarray
    row_count: np.ndarray

    @property
    def n_devices(self) -> int:
        return self.offsets.size - 1

    @classmethod
    def from_datasets(cls, datasets: Sequence[DeviceDataset], r: int | None = None) -> "Population":
        words = sorted({w.bits for d in datasets for w in d.words})
        if r is None:
            if not words:
                raise ValueError("cannot infer r from an empty population")
            r = len(words[0])
        return cls._build(r, words, [{w.bits: c for w, c in d.words.items()} for d in datasets])

    @classmethod
    def from_codes(cls, devices: Sequence[dict[int, int]], r: int) -> "Population":
        """Devices given as ``{integer code: count}`` over ``r``-bit words."""
        words = sorted({format(c, f"0{r}b") for d in devices for c in d})
        return cls._build(r, words, [{format(c, f"0{r}b"): n for c, n in d.items()} for d in devices])

    @classmethod
    def _build(cls, r, words, devices):
        if not 0 < r <= MAX_R:
            raise ValueError(f"r must lie in [1, {MAX_R}] for the array engine")
        if any(len(w) != r for w in words):
            raise ValueError("all encoded words must have length r")
        vid = {w: i for i, w in enumerate(words)}
        sizes = np.fromiter((len(d) for d in devices), dtype=np.int64, count=len(devices))
        offsets = np.zeros(len(devices) + 1, dtype=np.int64)
        np.cumsum(sizes, out=offsets[1:])
        row_vocab = np.empty(offsets[-1], dtype=np.int64)
        row_count = np.empty(offsets[-1], dtype=np.int64)
        k = 0
        for d in devices:
            for w in sorted(d):
                c = d[w]
                if c < 1:
                    raise ValueError("word counts must be positive")
                row_vocab[k] = vid[w]
                row_count[k] = c
                k += 1
        codes = np.array([int(w, 2) for w in words], dtype=np.uint64)
        return cls(r, tuple(EncodedWord(w) for w in words), codes, offsets, row_vocab, row_count)

    def to_datasets(self) -> list[DeviceDataset]:
        out = []
        for i in range(self.n_devices):
            a, b = self.offsets[i], self.offsets[i + 1]
            out.append(DeviceDataset({self.vocab[v]: int(c) for v, c in zip(self.row_vocab[a:b], self.row_count[a:b])}))
        return out

    def single_datapoint(self, seed: int) -> "Population":
        """Each device keeps one word drawn from its own empirical distribution."""
        n = self.n_devices
        u = _kernels.uniforms(_kernels.stream_key(seed, _SINGLE, 0), np.arange(n))
        chosen = _kernels.select_rows(
            self.offsets, self.row_vocab, self.row_count, u, np.ones(n, dtype=np.uint8)
        )
        has = chosen >= 0
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(has, out=offsets[1:])
        rows = chosen[has]
        return Population(self.r, self.vocab, self.vocab_codes, offsets, rows, np.ones(rows.size, dtype=np.int64))

    def vocab_index(self, words: Iterable[EncodedWord]) -> np.ndarray:
        pos = {w.bits: i for i, w in enumerate(self.vocab)}
        return np.array(sorted({pos[w.bits] for w in words if w.bits in pos}), dtype=np.int64)


@dataclass(frozen=True)
class RunConfig:
    rounds: int
    dimension_limit: int
    budget: PrivacyBudget | None = None
    epsilon_local: float | None = None
    prune: PruneConfig = PruneConfig()
    selection: SelectionPolicy = SelectionPolicy()
    deny_list: frozenset = frozenset()
    mode: str = MULTI_DATAPOINT
    seed: int = 0
    codebook: Codebook | None = None
    segment_schedule: tuple[int, ...] | None = None
    sampling_rate: float | None = None
    aggregation: str = "binomial"
    oracle: FrequencyOracle = field(default_factory=OheBrr)
    threads: int | None = None

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.dimension_limit < 2:
            raise ValueError("dimension_limit must be >= 2")
        if self.mode not in (SINGLE_DATAPOINT, MULTI_DATAPOINT):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.aggregation not in ("binomial", "device"):
            raise ValueError(f"unknown aggregation {self.aggregation!r}")
        if self.budget is None and self.epsilon_local is None:
            raise ValueError("need a privacy budget or an explicit epsilon_local")
        object.__setattr__(self, "deny_list", frozenset(self.deny_list))
        if self.segment_schedule is not None:
            object.__setattr__(self, "segment_schedule", tuple(self.segment_schedule))

    @property
    def participation_rate(self) -> float:
        if self.sampling_rate is not None:
            return self.sampling_rate
        return self.budget.sampling_rate if self.budget is not None else 1.0


@dataclass
class RunResult:
    heavy_hitters: list[str]
    discovered: list[str]
    final_prefixes: list[str]
    deny_list: list[str]
    per_round: list[RoundStats]
    estimates: dict[str, float]
    epsilon_local: float
    accountant: AccountantResult | None = None
    selected_words: set[str] = field(default_factory=set)
    metrics: dict = field(default_factory=dict)


def resolve_epsilon(cfg: RunConfig, n_devices: int, rounds: int | None = None) -> tuple[float, AccountantResult | None]:
    if cfg.epsilon_local is not None:
        return float(cfg.epsilon_local), None
    budget = cfg.budget
    if rounds is not None and rounds != budget.rounds:
        budget = dataclasses.replace(budget, rounds=rounds)
    acct = solve_local_epsilon(budget)
    return acct.epsilon_local, acct


def _as_population(dataset) -> Population:
    if isinstance(dataset, Population):
        return dataset
    return Population.from_datasets(list(dataset))


class _Round:
    """Vectorized per-round device work."""

    def __init__(self, pop: Population, cfg: RunConfig, denied: np.ndarray, threads: int):
        self.pop = pop
        self.cfg = cfg
        self.denied = denied
        self.threads = threads
        self.ids = np.arange(pop.n_devices)
        weighted = cfg.selection.kind == WEIGHTED
        self.base_weight = pop.row_count if weighted else np.ones_like(pop.row_count)

    def vocab_domain(self, prefixes: np.ndarray, L: int, s: int) -> tuple[np.ndarray, np.ndarray]:
        """Domain index of each vocabulary word (-1 if its prefix is not listed)
        and whether its prefix is listed."""
        r = self.pop.r
        codes = self.pop.vocab_codes
        head = codes >> np.uint64(r - L) if L else np.zeros_like(codes)
        pos = np.searchsorted(prefixes, head)
        pos_c = np.minimum(pos, prefixes.size - 1)
        listed = (pos < prefixes.size) & (prefixes[pos_c] == head)
        suffix = (codes >> np.uint64(r - L - s)) & np.uint64((1 << s) - 1)
        dom = np.where(listed, (pos_c.astype(np.int64) << s) | suffix.astype(np.int64), -1)
        return dom, listed

    def select(self, listed: np.ndarray, t: int, seed: int, rate: float) -> tuple[np.ndarray, np.ndarray]:
        ok = ~self.denied
        if self.cfg.selection.condition_on_prefix_list:
            ok = ok & listed
        row_w = self.base_weight * ok[self.pop.row_vocab]
        if rate < 1.0:
            pu = _kernels.uniforms(_kernels.stream_key(seed, _PARTICIPATE, t), self.ids)
            active = (pu < rate).astype(np.uint8)
        else:
            active = np.ones(self.pop.n_devices, dtype=np.uint8)
        u = _kernels.uniforms(_kernels.stream_key(seed, _SELECT, t), self.ids)
        chosen = _kernels.select_rows(self.pop.offsets, self.pop.row_vocab, row_w, u, active, self.threads)
        return chosen, active


def _per_device_aggregate(dev_index, active, params, oracle, seed, t):
    m = params.domain_size
    vectors = []
    for i in np.flatnonzero(active):
        rng = np.random.default_rng([seed, _DEVICE_NOISE, int(i), t])
        idx = int(dev_index[i])
        vectors.append(oracle.randomize(BOT if idx < 0 else idx, params, rng))
    if not vectors:
        return None
    agg = aggregate(vectors)
    assert agg.counts.size == m + 1
    return agg


@dataclass(frozen=True)
class RoundInput:
    """What a round's aggregation step sees: the exact histogram of selected
    extended prefixes (slot ``m`` is BOT and always zero) plus who took part."""

    round_index: int
    domain_size: int
    participants: int
    histogram: np.ndarray
    device_index: np.ndarray
    active: np.ndarray


# (round input) -> (per-bin scores, prune outcome, extras for RoundStats)
Mechanism = Callable[[RoundInput], "tuple[np.ndarray, PruneOutcome, dict]"]


class LocalOracleMechanism:
    """Local randomization of every report, exact sum, debias, PruneHH."""

    def __init__(self, cfg: RunConfig, epsilon_local: float):
        self.cfg = cfg
        self.eps = epsilon_local

    def __call__(self, ri: RoundInput):
        cfg = self.cfg
        params = cfg.oracle.params(self.eps, ri.domain_size)
        if cfg.aggregation == "binomial":
            rng = np.random.default_rng([cfg.seed, _AGGREGATE, ri.round_index])
            agg = cfg.oracle.sample_aggregate(ri.histogram, ri.participants, params, rng)
        else:
            agg = _per_device_aggregate(ri.device_index, ri.active, params, cfg.oracle, cfg.seed, ri.round_index)
        est = cfg.oracle.estimate(agg, params)
        outcome = prune_detail(est, ri.domain_size, cfg.prune)
        return est.f_tilde, outcome, {"sigma": est.sigma, "false_positive_rate": outcome.false_positive_rate}


def run(dataset, cfg: RunConfig) -> RunResult:
    pop = _as_population(dataset)
    if cfg.mode == SINGLE_DATAPOINT:
        pop = pop.single_datapoint(cfg.seed)
    eps, acct = resolve_epsilon(cfg, pop.n_devices)
    return _run_population(pop, cfg, eps, acct)


def _schedule_at(cfg: RunConfig, t: int) -> int | None:
    if cfg.segment_schedule is None:
        return None
    sched = cfg.segment_schedule
    return sched[t - 1] if t - 1 < len(sched) else sched[-1]


def _run_population(
    pop: Population,
    cfg: RunConfig,
    eps: float,
    acct: AccountantResult | None,
    mechanism: Mechanism | None = None,
) -> RunResult:
    r, P, seed = pop.r, cfg.dimension_limit, cfg.seed
    mech = mechanism or LocalOracleMechanism(cfg, eps)
    threads = cfg.threads or _kernels.thread_count()
    deny_bits = {w.bits for w in cfg.deny_list}
    denied = np.array([w.bits in deny_bits for w in pop.vocab], dtype=bool)
    rnd = _Round(pop, cfg, denied, threads)
    rate = cfg.participation_rate

    prefixes = np.zeros(1, dtype=np.uint64)
    L = 0
    s = _schedule_at(cfg, 1)
    s = first_segment_length(P, r) if s is None else min(s, r)
    if 1 << s > P:
        raise ValueError(f"first segment of {s} bits exceeds the dimension limit {P}")
    discovered: dict[str, None] = {}
    estimates: dict[str, float] = {}
    selected: set[int] = set()
    per_round: list[RoundStats] = []

    for t in range(1, cfg.rounds + 1):
        if prefixes.size == 0 or s == 0:
            break
        m = prefixes.size << s
        vdom, listed = rnd.vocab_domain(prefixes, L, s)
        chosen, active = rnd.select(listed, t, seed, rate)
        n = int(active.sum())
        dev_index = np.where(chosen >= 0, vdom[np.maximum(chosen, 0)], -1)
        selected.update(np.unique(chosen[chosen >= 0]).tolist())
        hist = np.bincount(dev_index[dev_index >= 0], minlength=m + 1).astype(np.int64)
        if n == 0:
            log.info("round %d: no participating devices", t)
            break
        scores, outcome, extras = mech(RoundInput(t, m, n, hist, dev_index, active))
        kept = outcome.kept
        new_len = L + s
        kept_vals = (prefixes[kept >> s] << np.uint64(s)) | (kept & ((1 << s) - 1)).astype(np.uint64)
        kept_bits = [format(int(v), f"0{new_len}b") for v in kept_vals]
        kept_est = dict(zip(kept_bits, scores[kept].tolist()))
        estimates.update(kept_est)
        empirical_fp = int((hist[kept] == 0).sum())
        remaining, done = remove_finished(kept_bits, cfg.codebook, set())
        finished = sorted(done)
        for bits in finished:
            estimates[bits] = kept_est[next(k for k in kept_bits if k.startswith(bits))]
            discovered.setdefault(bits, None)
        remaining_vals = np.array(sorted(int(b, 2) for b in remaining), dtype=np.uint64)
        L = new_len
        nxt = _schedule_at(cfg, t + 1)
        if nxt is None:
            try:
                s_next = next_segment_length(remaining_vals.size, L, P, r)
            except PrefixListTooLarge as exc:
                raise PrefixListTooLarge(f"round {t}: {exc}") from exc
        else:
            s_next = min(nxt, r - L)
            cap = P >> s_next
            if remaining_vals.size > cap:
                # fixed schedule: keep the best-estimated prefixes that fit
                order = sorted(remaining, key=lambda b: (-kept_est[b], b))[:cap]
                remaining_vals = np.array(sorted(int(b, 2) for b in order), dtype=np.uint64)
        per_round.append(
            RoundStats(
                round_index=t,
                prefix_count=int(prefixes.size),
                prefix_length=L - s,
                segment_length=s,
                domain_size=m,
                participants=n,
                tau_final=outcome.tau,
                kept=int(kept.size),
                finished=len(finished),
                empirical_fp=empirical_fp,
                extras=extras,
            )
        )
        log.debug("round %d: |X|=%d s=%d kept=%d tau=%.3f", t, prefixes.size, s, kept.size, outcome.tau)
        prefixes = remaining_vals
        s = s_next

    final_prefixes = [format(int(v), f"0{L}b") for v in prefixes] if L else []
    disc_words = [canonical_word(b, r).bits for b in discovered]
    hitters: dict[str, None] = {}
    for b in final_prefixes:
        hitters.setdefault(b if len(b) < r else canonical_word(b, r).bits, None)
    for b in disc_words:
        hitters.setdefault(b, None)
    for w in sorted(deny_bits):
        hitters.setdefault(w, None)
    est_out = {}
    for b, v in estimates.items():
        key = canonical_word(b, r).bits if b in discovered else b
        est_out[key] = v
    return RunResult(
        heavy_hitters=list(hitters),
        discovered=disc_words,
        final_prefixes=final_prefixes,
        deny_list=sorted(deny_bits),
        per_round=per_round,
        estimates=est_out,
        epsilon_local=eps,
        accountant=acct,
        selected_words={pop.vocab[v].bits for v in selected},
    )


def _derived_seed(seed: int, k: int) -> int:
    return mix64(seed ^ (k * 0x9E3779B97F4A7C15)) & ((1 << 63) - 1)


def run_two_rounds(dataset, cfg: RunConfig) -> RunResult:
    """Two back-to-back runs sharing one budget; the second run's deny list
    adds the words found by the first."""
    pop = _as_population(dataset)
    if cfg.mode == SINGLE_DATAPOINT:
        pop = pop.single_datapoint(cfg.seed)
    eps, acct = resolve_epsilon(cfg, pop.n_devices, rounds=2 * cfg.rounds)
    first = _run_population(pop, cfg, eps, acct)
    found = {w for w in first.heavy_hitters if len(w) == pop.r}
    deny2 = frozenset(cfg.deny_list) | {EncodedWord(w) for w in found}
    cfg2 = dataclasses.replace(cfg, deny_list=deny2, seed=_derived_seed(cfg.seed, 1))
    second = _run_population(pop, cfg2, eps, acct)
    hitters = dict.fromkeys(first.heavy_hitters)
    hitters.update(dict.fromkeys(second.heavy_hitters))
    return RunResult(
        heavy_hitters=list(hitters),
        discovered=list(dict.fromkeys(first.discovered + second.discovered)),
        final_prefixes=list(dict.fromkeys(first.final_prefixes + second.final_prefixes)),
        deny_list=sorted({w.bits for w in deny2}),
        per_round=first.per_round + second.per_round,
        estimates={**first.estimates, **second.estimates},
        epsilon_local=eps,
        accountant=acct,
        selected_words=first.selected_words | second.selected_words,
    )


__all__ = [
    "MULTI_DATAPOINT",
    "SINGLE_DATAPOINT",
    "Population",
    "RunConfig",
    "RunResult",
    "run",
    "run_two_rounds",
    "resolve_epsilon",
    "UNWEIGHTED",
    "WEIGHTED",
]
