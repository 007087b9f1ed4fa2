from collections import Counter

import numpy as np
import pytest

from prefixhh.data import (
    DataFormatError,
    ZipfSpec,
    corpus_codebook,
    encode_deny_list,
    encode_devices,
    encode_population,
    generate_zipf,
    load_tsv,
    load_word_list,
    read_tsv,
    synthetic_vocabulary,
    write_tsv,
    write_word_list,
)
from prefixhh.encoding import build_huffman, decode


def test_single_line(tmp_path):
    p = tmp_path / "d.tsv"
    p.write_text("u1\thello\t3\n")
    cb = build_huffman({ch: 1 for ch in "helo"})
    devices, dropped = load_tsv(p, cb, 40)
    assert dropped == 0 and len(devices) == 1
    [(w, c)] = devices[0].words.items()
    assert c == 3 and decode(w, cb) == "hello"


def test_duplicates_summed_and_user_order(tmp_path):
    p = tmp_path / "d.tsv"
    p.write_text("b\tx\t1\na\ty\t2\nb\tx\t4\n")
    assert read_tsv(p) == [{"x": 5}, {"y": 2}]


@pytest.mark.parametrize(
    "body,line",
    [("u\tw\t1\nu\tw\n", 2), ("u\tw\tzero\n", 1), ("u\tw\t0\n", 1), ("u\t\t1\n", 1), ("u\ta b\t1\n", 1)],
)
def test_malformed_lines_report_line_number(tmp_path, body, line):
    p = tmp_path / "bad.tsv"
    p.write_text(body)
    with pytest.raises(DataFormatError, match=f":{line}:"):
        read_tsv(p)


def test_empty_file(tmp_path):
    p = tmp_path / "e.tsv"
    p.write_text("\n")
    with pytest.raises(DataFormatError):
        read_tsv(p)


def test_round_trip(tmp_path):
    raw = generate_zipf(ZipfSpec(300, 50, seed=2))
    p = tmp_path / "z.tsv"
    write_tsv(raw, p)
    back = read_tsv(p)
    assert [Counter(d) for d in back if d] == [Counter(d) for d in raw if d]


def test_generator_deterministic(tmp_path):
    spec = ZipfSpec(500, 100, seed=9)
    write_tsv(generate_zipf(spec), tmp_path / "a.tsv")
    write_tsv(generate_zipf(spec), tmp_path / "b.tsv")
    assert (tmp_path / "a.tsv").read_bytes() == (tmp_path / "b.tsv").read_bytes()
    assert generate_zipf(ZipfSpec(500, 100, seed=10)) != generate_zipf(spec)


def test_vocabulary_distinct():
    v = synthetic_vocabulary(2000, 0)
    assert len(set(v)) == 2000
    assert all(2 <= len(w) <= 7 and w.isalpha() for w in v)


def test_degenerate_zipf():
    raw = generate_zipf(ZipfSpec(2000, 50, exponent=30.0, seed=1))
    vocab = synthetic_vocabulary(50, 1)
    totals = Counter()
    for d in raw:
        totals.update(d)
    assert totals[vocab[0]] / sum(totals.values()) > 0.999


def test_zipf_slope():
    spec = ZipfSpec(100_000, 2000, exponent=1.1, words_per_device=10, seed=4)
    raw = generate_zipf(spec)
    vocab = synthetic_vocabulary(2000, 4)
    totals = Counter()
    for d in raw:
        totals.update(d)
    assert sum(totals.values()) > 10**6 * 0.95
    ranks = np.arange(1, 201)
    freq = np.array([totals[vocab[k - 1]] for k in ranks], dtype=float)
    slope = np.polyfit(np.log(ranks), np.log(freq), 1)[0]
    assert slope == pytest.approx(-1.1, abs=0.05)


def test_min_words():
    raw = generate_zipf(ZipfSpec(1000, 30, words_per_device=0.1, min_words=2, seed=0))
    assert all(sum(d.values()) >= 2 for d in raw)


def test_encoding_drops_long_words():
    raw = [{"ab": 2, "abababababab": 1}]
    cb = corpus_codebook(raw, "fixed_width", 2)
    devices, dropped = encode_devices(raw, cb, 10)
    assert dropped == 1 and len(devices[0].words) == 1
    pop, dropped = encode_population(raw, cb, 10)
    assert dropped == 1 and pop.n_devices == 1


def test_word_lists(tmp_path):
    p = tmp_path / "w.txt"
    write_word_list(["the", "and"], p)
    assert load_word_list(p) == ["the", "and"]
    cb = build_huffman({ch: 1 for ch in "thenad"})
    deny = encode_deny_list(["the", "and"], cb, 30)
    assert {decode(w, cb) for w in deny} == {"the", "and"}
