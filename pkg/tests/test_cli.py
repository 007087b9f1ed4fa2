import json
import time

import pytest

from prefixhh.cli import EXIT_BUDGET, EXIT_OK, EXIT_USAGE, main


@pytest.fixture
def workspace(tmp_path):
    assert main(["gen", "--devices", "1000", "--vocab", "100", "--seed", "7", "--words-per-device", "3",
                 "--out", str(tmp_path / "d.tsv"), "--vocab-out", str(tmp_path / "vocab.txt")]) == EXIT_OK
    cfg = {
        "dataset": "d.tsv",
        "rounds": 3,
        "dimension_limit": 4096,
        "budget": {"epsilon_agg": 4.0, "delta": 1e-4},
        "seed": 3,
        "deny_list": ["zzzz"],
    }
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    return tmp_path


def read_outputs(d):
    return {name: (d / name).read_bytes() for name in ("results.csv", "rounds.csv", "summary.txt", "codebook.txt")}


def test_run_outputs_and_determinism(workspace):
    t0 = time.perf_counter()
    assert main(["run", str(workspace / "cfg.json"), "-o", str(workspace / "a")]) == EXIT_OK
    assert time.perf_counter() - t0 < 10
    assert main(["run", str(workspace / "cfg.json"), "-o", str(workspace / "b")]) == EXIT_OK
    a, b = read_outputs(workspace / "a"), read_outputs(workspace / "b")
    assert a == b
    header = a["results.csv"].decode().splitlines()[0]
    assert header == "rank,word,true_freq,est_freq,window_marginal_W50,is_false_positive"
    assert a["rounds.csv"].decode().startswith("round,prefix_count,segment_length,tau_final,kept,domain_size")
    keys = [line.split("=")[0] for line in a["summary.txt"].decode().splitlines()]
    assert keys == ["discovered_count", "fp_ratio", "weight_ratio", "utility_loss", "epsilon_local", "achieved_epsilon_agg"]


def test_thread_count_does_not_change_outputs(workspace, monkeypatch):
    monkeypatch.setenv("PREFIXHH_THREADS", "1")
    assert main(["run", str(workspace / "cfg.json"), "-o", str(workspace / "t1")]) == EXIT_OK
    monkeypatch.setenv("PREFIXHH_THREADS", "4")
    assert main(["run", str(workspace / "cfg.json"), "-o", str(workspace / "t4")]) == EXIT_OK
    assert read_outputs(workspace / "t1") == read_outputs(workspace / "t4")


def test_gen_is_deterministic(tmp_path):
    for name in ("x", "y"):
        assert main(["gen", "--devices", "2000", "--vocab", "300", "--zipf", "1.1", "--seed", "7",
                     "--out", str(tmp_path / f"{name}.tsv")]) == EXIT_OK
    assert (tmp_path / "x.tsv").read_bytes() == (tmp_path / "y.tsv").read_bytes()


def test_missing_dataset(tmp_path, capsys):
    (tmp_path / "cfg.json").write_text(json.dumps({"dataset": "nope.tsv", "rounds": 2, "dimension_limit": 100}))
    assert main(["run", str(tmp_path / "cfg.json")]) == EXIT_USAGE
    assert "nope.tsv" in capsys.readouterr().err


def test_config_errors(workspace):
    bad = workspace / "bad.json"
    bad.write_text(json.dumps({"dataset": "d.tsv", "rounds": 2, "dimension_limit": 100, "colour": 1}))
    assert main(["run", str(bad)]) == EXIT_USAGE
    bad.write_text("{not json")
    assert main(["run", str(bad)]) == EXIT_USAGE
    assert main(["run", str(workspace / "absent.json")]) == EXIT_USAGE


def test_accountant(capsys):
    assert main(["accountant", "--eps-agg", "1", "--delta", "1e-6", "--rounds", "4", "--devices", "1600000"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "reference (numerical shuffle bound) epsilon_local=7.39" in out
    first = float(out.splitlines()[0].split("=")[1])
    assert first > 0
    main(["accountant", "--eps-agg", "1", "--delta", "1e-6", "--rounds", "1", "--devices", "1600000"])
    one = float(capsys.readouterr().out.splitlines()[0].split("=")[1])
    main(["accountant", "--eps-agg", "1", "--delta", "1e-6", "--rounds", "6", "--devices", "1600000"])
    six = float(capsys.readouterr().out.splitlines()[0].split("=")[1])
    assert one > six


def test_accountant_infeasible():
    assert main(["accountant", "--eps-agg", "1e-5", "--delta", "1e-9", "--rounds", "10", "--devices", "100"]) == EXIT_BUDGET


def test_accountant_output_is_stable(capsys):
    args = ["accountant", "--eps-agg", "0.5", "--delta", "1e-7", "--rounds", "3", "--devices", "50000"]
    main(args)
    a = capsys.readouterr().out
    main(args)
    assert capsys.readouterr().out == a


@pytest.mark.parametrize("method", ["triehh", "triehhpp", "central-laplace", "central-gaussian"])
def test_baselines_run_and_repeat(workspace, method):
    args = ["baseline", "--method", method, "--config", str(workspace / "cfg.json"), "--rounds", "3"]
    if method == "triehh":
        args += ["--theta", "10", "--rate", "0.0079"]
    if method == "triehhpp":
        cfg = json.loads((workspace / "cfg.json").read_text())
        cfg["budget"]["epsilon_agg"] = 1.0
        (workspace / "pp.json").write_text(json.dumps(cfg))
        args[4] = str(workspace / "pp.json")
    assert main(args + ["-o", str(workspace / "p")]) == EXIT_OK
    assert main(args + ["-o", str(workspace / "q")]) == EXIT_OK
    assert read_outputs(workspace / "p") == read_outputs(workspace / "q")


def test_triehhpp_round_budget_too_large(workspace):
    args = ["baseline", "--method", "triehhpp", "--config", str(workspace / "cfg.json"), "--rounds", "3"]
    assert main(args) == EXIT_BUDGET


def test_unknown_method(workspace):
    assert main(["baseline", "--method", "nope", "--config", str(workspace / "cfg.json")]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE


def test_two_rounds_and_word_file_deny_list(workspace):
    cfg = json.loads((workspace / "cfg.json").read_text())
    cfg.update(two_rounds=True, deny_list="vocab.txt", rounds=2)
    (workspace / "two.json").write_text(json.dumps(cfg))
    assert main(["run", str(workspace / "two.json"), "-o", str(workspace / "two")]) == EXIT_OK
    words = (workspace / "two" / "results.csv").read_text().splitlines()[1:]
    # every vocabulary word is denied, so each output row is one of them
    assert len(words) >= 100
