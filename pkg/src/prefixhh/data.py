"""Dataset ingestion (TSV) and a synthetic Zipf workload.

Raw datasets are lists of ``{word: count}`` dicts, one per device. They are
kept unencoded because a Huffman codebook is usually built from the corpus
itself; :func:`encode_devices` and :func:`encode_population` turn them into
bit-level datasets once a codebook exists.
"""

from __future__ import annotations

import csv
import logging
import string
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .device import DeviceDataset
from .encoding import Codebook, EncodedWord, WordTooLong, build_fixed_width, build_huffman, encode, symbol_frequencies
from .engine import Population

log = logging.getLogger(__name__)

RawDataset = list[dict[str, int]]


class DataFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ZipfSpec:
    n_devices: int
    vocab_size: int
    exponent: float = 1.1
    words_per_device: float = 10.0
    min_words: int = 1
    seed: int = 0
    min_word_length: int = 2
    max_word_length: int = 7

    def __post_init__(self):
        if self.n_devices < 1 or self.vocab_size < 1:
            raise ValueError("n_devices and vocab_size must be >= 1")
        if not self.exponent > 0:
            raise ValueError("exponent must be positive")
        if self.words_per_device < 0 or self.min_words < 0:
            raise ValueError("word counts per device must be non-negative")
        if not 1 <= self.min_word_length <= self.max_word_length:
            raise ValueError("bad word length range")


# rough English letter frequencies, so Huffman codes differ from fixed width
_LETTER_WEIGHTS = np.array(
    [8.2, 1.5, 2.8, 4.3, 12.7, 2.2, 2.0, 6.1, 7.0, 0.15, 0.77, 4.0, 2.4,
     6.7, 7.5, 1.9, 0.1, 6.0, 6.3, 9.1, 2.8, 0.98, 2.4, 0.15, 2.0, 0.07]
)


def synthetic_vocabulary(size: int, seed: int, min_len: int = 2, max_len: int = 7) -> list[str]:
    """``size`` distinct lowercase words; index 0 is the most popular rank."""
    rng = np.random.default_rng([seed, 0x766F63])
    letters = np.array(list(string.ascii_lowercase))
    p = _LETTER_WEIGHTS / _LETTER_WEIGHTS.sum()
    capacity = sum(26**k for k in range(min_len, max_len + 1))
    if size > capacity:
        raise ValueError(f"cannot make {size} distinct words of length {min_len}..{max_len}")
    seen: dict[str, None] = {}
    while len(seen) < size:
        n = size - len(seen)
        lengths = rng.integers(min_len, max_len + 1, size=2 * n)
        chars = rng.choice(letters, size=(2 * n, max_len), p=p)
        for row, k in zip(chars, lengths):
            seen.setdefault("".join(row[:k]), None)
            if len(seen) == size:
                break
    return list(seen)


def zipf_probabilities(vocab_size: int, exponent: float) -> np.ndarray:
    w = np.arange(1, vocab_size + 1, dtype=np.float64) ** -exponent
    return w / w.sum()


def generate_zipf(spec: ZipfSpec) -> RawDataset:
    """Each device draws ``max(Poisson(mean), min)`` words i.i.d. from Zipf."""
    vocab = synthetic_vocabulary(spec.vocab_size, spec.seed, spec.min_word_length, spec.max_word_length)
    rng = np.random.default_rng([spec.seed, 0x7A6970])
    sizes = np.maximum(rng.poisson(spec.words_per_device, spec.n_devices), spec.min_words)
    ranks = rng.choice(spec.vocab_size, size=int(sizes.sum()), p=zipf_probabilities(spec.vocab_size, spec.exponent))
    owner = np.repeat(np.arange(spec.n_devices), sizes)
    keys, counts = np.unique(owner * spec.vocab_size + ranks, return_counts=True)
    out: RawDataset = [{} for _ in range(spec.n_devices)]
    for key, c in zip(keys.tolist(), counts.tolist()):
        dev, rank = divmod(key, spec.vocab_size)
        out[dev][vocab[rank]] = c
    return out


def _check_word(word: str, where: str) -> None:
    if not word or any(ch.isspace() for ch in word):
        raise DataFormatError(f"{where}: words must be non-empty and whitespace-free, got {word!r}")


def write_tsv(raw: Sequence[dict[str, int]], path: str | Path, user_ids: Sequence[str] | None = None) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        for i, words in enumerate(raw):
            uid = user_ids[i] if user_ids is not None else f"u{i}"
            for word in sorted(words):
                _check_word(word, f"device {uid}")
                fh.write(f"{uid}\t{word}\t{words[word]}\n")


def read_tsv(path: str | Path) -> RawDataset:
    """Group ``user<TAB>word<TAB>count`` lines by user, summing duplicates.

    Users appear in order of first occurrence.
    """
    path = Path(path)
    users: dict[str, Counter] = defaultdict(Counter)
    with path.open("r", encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataFormatError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
            uid, word, count = parts
            _check_word(word, f"{path}:{lineno}")
            try:
                n = int(count)
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: count {count!r} is not an integer") from None
            if n < 1:
                raise DataFormatError(f"{path}:{lineno}: count must be positive, got {n}")
            users[uid][word] += n
    if not users:
        raise DataFormatError(f"{path}: no users found")
    return [dict(c) for c in users.values()]


def word_totals(raw: Iterable[dict[str, int]]) -> Counter:
    total: Counter = Counter()
    for d in raw:
        total.update(d)
    return total


def corpus_codebook(raw: Iterable[dict[str, int]], mode: str = "huffman", width: int = 5) -> Codebook:
    totals = word_totals(raw)
    if mode == "huffman":
        return build_huffman(symbol_frequencies(totals))
    if mode == "fixed_width":
        return build_fixed_width(sorted({ch for w in totals for ch in w}), width)
    raise ValueError(f"unknown codebook mode {mode!r}")


def _encode_all(raw, cb: Codebook, r: int):
    cache: dict[str, str | None] = {}
    dropped = 0
    devices = []
    for d in raw:
        enc = {}
        for word, c in d.items():
            bits = cache.get(word, "")
            if bits == "":
                try:
                    bits = encode(word, cb, r).bits
                except WordTooLong:
                    bits = None
                cache[word] = bits
            if bits is None:
                dropped += c
                continue
            enc[bits] = enc.get(bits, 0) + c
        devices.append(enc)
    if dropped:
        log.info("dropped %d word occurrences longer than r=%d bits", dropped, r)
    return devices, dropped


def encode_devices(raw: RawDataset, cb: Codebook, r: int) -> tuple[list[DeviceDataset], int]:
    """Encode every word; over-length words are dropped and their occurrences counted."""
    devices, dropped = _encode_all(raw, cb, r)
    return [DeviceDataset({EncodedWord(b): c for b, c in d.items()}) for d in devices], dropped


def encode_population(raw: RawDataset, cb: Codebook, r: int) -> tuple[Population, int]:
    devices, dropped = _encode_all(raw, cb, r)
    words = sorted({b for d in devices for b in d})
    return Population._build(r, words, devices), dropped


def load_tsv(path: str | Path, cb: Codebook, r: int) -> tuple[list[DeviceDataset], int]:
    return encode_devices(read_tsv(path), cb, r)


def load_word_list(path: str | Path) -> list[str]:
    """One word per line (blank lines and ``#`` comments skipped)."""
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            word = line.strip()
            if not word or word.startswith("#"):
                continue
            _check_word(word, f"{path}:{lineno}")
            out.append(word)
    return out


def write_word_list(words: Iterable[str], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for w in words:
            fh.write(w + "\n")


def encode_deny_list(words: Iterable[str], cb: Codebook, r: int) -> frozenset:
    out = set()
    for w in words:
        try:
            out.add(encode(w, cb, r))
        except WordTooLong:
            log.warning("deny-list word %r does not fit in %d bits; skipped", w, r)
    return frozenset(out)


__all__ = [
    "DataFormatError",
    "RawDataset",
    "ZipfSpec",
    "corpus_codebook",
    "encode_deny_list",
    "encode_devices",
    "encode_population",
    "generate_zipf",
    "load_tsv",
    "load_word_list",
    "read_tsv",
    "synthetic_vocabulary",
    "word_totals",
    "write_tsv",
    "write_word_list",
    "zipf_probabilities",
]
