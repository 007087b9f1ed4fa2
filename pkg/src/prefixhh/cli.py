"""Command line front end.

Exit codes: 0 success, 2 usage or config error, 3 infeasible privacy budget,
4 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path

from . import accountant as acc
from . import baselines, data, metrics
from .device import SelectionPolicy
from .encoding import EncodingError, decode, load_codebook, save_codebook
from .engine import MULTI_DATAPOINT, RunConfig, RunResult, run, run_two_rounds
from .server import PruneConfig

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_BUDGET = 3
EXIT_RUNTIME = 4

log = logging.getLogger("prefixhh")


class ConfigError(Exception):
    pass


_TOP_KEYS = {
    "dataset", "codebook", "codebook_mode", "symbol_width", "output_dir", "r",
    "rounds", "dimension_limit", "budget", "epsilon_local", "prune", "selection",
    "deny_list", "mode", "seed", "segment_schedule", "two_rounds", "window",
    "fp_on_selected", "threads",
}
_BUDGET_KEYS = {"epsilon_agg", "delta", "sampling_rate"}


@dataclass
class Experiment:
    cfg: RunConfig
    population: object
    dist: metrics.GlobalDistribution
    codebook: object
    output_dir: Path
    two_rounds: bool
    window: int
    fp_on_selected: bool
    dropped: int


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def _need_file(path: Path, what: str) -> Path:
    if not path.is_file():
        raise ConfigError(f"{what} not found: {path}")
    return path


def load_experiment(config_path: str | Path, output_dir: str | None = None) -> Experiment:
    config_path = Path(config_path)
    _need_file(config_path, "config file")
    try:
        raw_cfg = json.loads(config_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{config_path}: invalid JSON ({exc})") from None
    if not isinstance(raw_cfg, dict):
        raise ConfigError(f"{config_path}: top level must be an object")
    unknown = set(raw_cfg) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    base = config_path.parent
    for key in ("dataset", "rounds", "dimension_limit"):
        if key not in raw_cfg:
            raise ConfigError(f"missing required key {key!r}")

    dataset_path = _need_file(_resolve(base, raw_cfg["dataset"]), "dataset")
    try:
        raw = data.read_tsv(dataset_path)
    except data.DataFormatError as exc:
        raise ConfigError(str(exc)) from None
    r = int(raw_cfg.get("r", 60))
    if "codebook" in raw_cfg:
        try:
            cb = load_codebook(_need_file(_resolve(base, raw_cfg["codebook"]), "codebook"))
        except EncodingError as exc:
            raise ConfigError(f"bad codebook: {exc}") from None
    else:
        cb = data.corpus_codebook(raw, raw_cfg.get("codebook_mode", "huffman"), int(raw_cfg.get("symbol_width", 5)))
    pop, dropped = data.encode_population(raw, cb, r)

    try:
        budget = None
        if "budget" in raw_cfg:
            b = raw_cfg["budget"]
            bad = set(b) - _BUDGET_KEYS
            if bad:
                raise ConfigError(f"unknown budget keys: {', '.join(sorted(bad))}")
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                budget = acc.PrivacyBudget(
                    epsilon_agg=float(b["epsilon_agg"]),
                    delta=float(b["delta"]),
                    rounds=int(raw_cfg["rounds"]),
                    n_devices=pop.n_devices,
                    sampling_rate=float(b.get("sampling_rate", 1.0)),
                )
        deny = raw_cfg.get("deny_list", [])
        if isinstance(deny, str):
            deny = data.load_word_list(_need_file(_resolve(base, deny), "deny list"))
        sched = raw_cfg.get("segment_schedule")
        cfg = RunConfig(
            rounds=int(raw_cfg["rounds"]),
            dimension_limit=int(raw_cfg["dimension_limit"]),
            budget=budget,
            epsilon_local=raw_cfg.get("epsilon_local"),
            prune=PruneConfig(**raw_cfg.get("prune", {})),
            selection=SelectionPolicy(**raw_cfg.get("selection", {})),
            deny_list=data.encode_deny_list(deny, cb, r),
            mode=raw_cfg.get("mode", MULTI_DATAPOINT),
            seed=int(raw_cfg.get("seed", 0)),
            codebook=cb,
            segment_schedule=tuple(sched) if sched else None,
            threads=raw_cfg.get("threads"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid config: {exc}") from None
    out = Path(output_dir) if output_dir else _resolve(base, raw_cfg.get("output_dir", "out"))
    return Experiment(
        cfg=cfg,
        population=pop,
        dist=metrics.GlobalDistribution.from_population(pop),
        codebook=cb,
        output_dir=out,
        two_rounds=bool(raw_cfg.get("two_rounds", False)),
        window=int(raw_cfg.get("window", metrics.DEFAULT_WINDOW)),
        fp_on_selected=bool(raw_cfg.get("fp_on_selected", False)),
        dropped=dropped,
    )


def _fmt(x: float) -> str:
    return repr(float(x))


def _label(bits: str, cb, r: int) -> str:
    if len(bits) == r:
        try:
            return decode(bits, cb)
        except EncodingError:
            pass
    return bits


def write_outputs(exp: Experiment, result: RunResult) -> metrics.MetricsReport:
    out = exp.output_dir
    out.mkdir(parents=True, exist_ok=True)
    pop = exp.population
    report = metrics.summarize(result, exp.dist, pop, exp.window, exp.fp_on_selected)
    fp = set(metrics.false_positives(report.ordered, pop, result.selected_words if exp.fp_on_selected else None))
    n = pop.n_devices
    with (out / "results.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "word", "true_freq", "est_freq", f"window_marginal_W{exp.window}", "is_false_positive"])
        for i, (x, wm) in enumerate(zip(report.ordered, report.window_marginals), start=1):
            est = result.estimates.get(x)
            w.writerow([
                i,
                _label(x, exp.codebook, pop.r),
                _fmt(exp.dist.weighted.get(x, 0.0)),
                _fmt(est / n) if est is not None else "",
                _fmt(wm),
                int(x in fp),
            ])
    with (out / "rounds.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["round", "prefix_count", "segment_length", "tau_final", "kept", "domain_size"])
        for i, st in enumerate(result.per_round, start=1):
            w.writerow([i, st.prefix_count, st.segment_length, _fmt(st.tau_final), st.kept, st.domain_size])
    achieved = result.accountant.achieved_epsilon_agg if result.accountant else float("nan")
    lines = [
        f"discovered_count={report.discovered_count}",
        f"fp_ratio={_fmt(report.fp_ratio)}",
        f"weight_ratio={_fmt(report.weight_ratio)}",
        f"utility_loss={_fmt(report.utility_loss)}",
        f"epsilon_local={_fmt(result.epsilon_local)}",
        f"achieved_epsilon_agg={_fmt(achieved)}",
    ]
    (out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    save_codebook(exp.codebook, out / "codebook.txt")
    return report


def cmd_run(args) -> int:
    exp = load_experiment(args.config, args.output)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", acc.AmplificationOutOfRange)
        result = (run_two_rounds if exp.two_rounds else run)(exp.population, exp.cfg)
    report = write_outputs(exp, result)
    print(f"discovered {report.discovered_count} heavy hitters ({report.fp_count} false positives); "
          f"outputs in {exp.output_dir}")
    return EXIT_OK


def cmd_accountant(args) -> int:
    budget = acc.PrivacyBudget(args.eps_agg, args.delta, args.rounds, args.devices, args.gamma)
    res = acc.solve_local_epsilon(budget, args.tolerance)
    print(f"epsilon_local={res.epsilon_local:.6f}")
    print(f"achieved_epsilon_agg={res.achieved_epsilon_agg:.6f}")
    print(f"bound={res.bound_name}")
    ref = acc.reference_epsilon_local(budget)
    if ref is not None:
        print(f"reference (numerical shuffle bound) epsilon_local={ref}")
    return EXIT_OK


def cmd_gen(args) -> int:
    spec = data.ZipfSpec(
        n_devices=args.devices,
        vocab_size=args.vocab,
        exponent=args.zipf,
        words_per_device=args.words_per_device,
        min_words=args.min_words,
        seed=args.seed,
    )
    raw = data.generate_zipf(spec)
    data.write_tsv(raw, args.out)
    if args.vocab_out:
        data.write_word_list(data.synthetic_vocabulary(args.vocab, args.seed), args.vocab_out)
    print(f"wrote {len(raw)} devices to {args.out}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    exp = load_experiment(args.config, args.output)
    cfg = exp.cfg
    rounds = args.rounds or cfg.rounds
    plan = baselines.TreeParams(
        dimension_limit=cfg.dimension_limit,
        codebook=cfg.codebook,
        selection=cfg.selection,
        deny_list=cfg.deny_list,
        mode=cfg.mode,
        seed=cfg.seed,
        segment_schedule=cfg.segment_schedule,
        prune=cfg.prune,
        threads=cfg.threads,
    )
    budget = cfg.budget
    if args.method == "triehh":
        if args.rate is None:
            if budget is None:
                raise ConfigError("triehh needs --rate or a budget in the config")
            rate = baselines.triehh_sampling_rate(budget.epsilon_agg, rounds, args.theta)
        else:
            rate = args.rate
        result = baselines.run_triehh(exp.population, baselines.TrieHHConfig(args.theta, rate, rounds), plan)
    else:
        if budget is None:
            raise ConfigError(f"{args.method} needs a budget in the config")
        if args.method == "triehhpp":
            result = baselines.run_triehhpp(exp.population, args.theta, budget.epsilon_agg, budget.delta, rounds, plan)
        else:
            noise = args.method.split("-", 1)[1]
            ncfg = baselines.central_config(noise, budget.epsilon_agg, budget.delta, rounds)
            result = baselines.run_central(exp.population, ncfg, plan, rounds)
    report = write_outputs(exp, result)
    print(f"{args.method}: discovered {report.discovered_count} heavy hitters ({report.fp_count} false positives); "
          f"outputs in {exp.output_dir}")
    return EXIT_OK


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="prefixhh", description="Private heavy-hitter discovery simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a JSON config")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="output directory (overrides the config)")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("accountant", help="solve the per-round local epsilon")
    a.add_argument("--eps-agg", type=float, required=True)
    a.add_argument("--delta", type=float, required=True)
    a.add_argument("--rounds", type=_positive_int, required=True)
    a.add_argument("--devices", type=_positive_int, required=True)
    a.add_argument("--gamma", type=float, default=1.0)
    a.add_argument("--tolerance", type=float, default=acc.DEFAULT_TOLERANCE)
    a.set_defaults(func=cmd_accountant)

    g = sub.add_parser("gen", help="generate a synthetic Zipf dataset as TSV")
    g.add_argument("--devices", type=_positive_int, required=True)
    g.add_argument("--vocab", type=_positive_int, required=True)
    g.add_argument("--zipf", type=float, default=1.1)
    g.add_argument("--words-per-device", type=float, default=10.0)
    g.add_argument("--min-words", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="dataset.tsv")
    g.add_argument("--vocab-out", help="also write the vocabulary in popularity order")
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("baseline", help="run a comparison algorithm")
    b.add_argument("--method", required=True, choices=["triehh", "triehhpp", "central-laplace", "central-gaussian"])
    b.add_argument("--config", required=True)
    b.add_argument("--theta", type=_positive_int, default=10)
    b.add_argument("--rate", type=float)
    b.add_argument("--rounds", type=_positive_int)
    b.add_argument("-o", "--output")
    b.set_defaults(func=cmd_baseline)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", acc.AmplificationOutOfRange)
            return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (acc.BudgetTooTight, baselines.InfeasibleTheta, baselines.RoundBudgetOutOfRange) as exc:
        print(f"error: infeasible privacy budget: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ValueError, data.DataFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE if args.command in ("accountant", "gen") else EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
