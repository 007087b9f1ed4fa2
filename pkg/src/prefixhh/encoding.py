"""Prefix-free codebooks and fixed-length bitstring encoding of words.

Words are sequences of unicode scalars. Each word is encoded as the
concatenation of its symbol codewords, then the END codeword, then zero
padding up to a fixed total length ``r``. Symbols missing from the codebook
map to the reserved UNK codeword.

Bitstrings are plain ``str`` objects over ``"0"``/``"1"``.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

END = "END"
UNK = "UNK"
RESERVED = (END, UNK)

UNKNOWN_CHAR = "�"


class EncodingError(ValueError):
    pass


class WordTooLong(EncodingError):
    """The encoded word (codewords plus END) does not fit in ``r`` bits."""

    def __init__(self, word: str, needed: int, r: int):
        super().__init__(f"word {word!r} needs {needed} bits, budget is {r}")
        self.word = word
        self.needed = needed
        self.r = r


@dataclass(frozen=True)
class EncodedWord:
    """A word encoded to exactly ``len(bits)`` bits."""

    bits: str

    @property
    def r(self) -> int:
        return len(self.bits)

    @property
    def code(self) -> int:
        return int(self.bits, 2) if self.bits else 0

    def prefix(self, length: int) -> str:
        return self.bits[:length]

    def __str__(self) -> str:
        return self.bits


@dataclass(frozen=True)
class Codebook:
    """Immutable prefix-free map from symbols to codewords.

    ``mode`` is ``"huffman"`` or ``"fixed_width"``; ``width`` is the per-symbol
    bit count in fixed-width mode.
    """

    symbol_to_code: Mapping[str, str]
    mode: str = "huffman"
    width: int | None = None
    _decode: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        codes = dict(self.symbol_to_code)
        for tok in RESERVED:
            if tok not in codes:
                raise EncodingError(f"codebook is missing reserved symbol {tok}")
        for sym, code in codes.items():
            if not code or set(code) - {"0", "1"}:
                raise EncodingError(f"invalid codeword {code!r} for {sym!r}")
            if sym not in RESERVED and len(sym) != 1:
                raise EncodingError(f"symbol {sym!r} is not a single unicode scalar")
        _check_prefix_free(codes)
        if self.mode == "fixed_width":
            widths = {len(c) for c in codes.values()}
            if widths != {self.width}:
                raise EncodingError("fixed_width codebook has codewords of mixed length")
        elif self.mode != "huffman":
            raise EncodingError(f"unknown codebook mode {self.mode!r}")
        object.__setattr__(self, "symbol_to_code", codes)
        object.__setattr__(self, "_decode", {c: s for s, c in codes.items()})

    @property
    def end_code(self) -> str:
        return self.symbol_to_code[END]

    def code_for(self, symbol: str) -> str:
        code = self.symbol_to_code.get(symbol)
        return self.symbol_to_code[UNK] if code is None else code

    def symbols(self) -> list[str]:
        return list(self.symbol_to_code)

    def decode_symbols(self, bits: str) -> tuple[list[str], int, bool]:
        """Greedy decode.

        Returns ``(symbols, consumed, hit_end)``: decoding stops right after
        END, or at the last full codeword when the tail matches nothing.
        """
        out: list[str] = []
        pos = 0
        buf = ""
        for i, b in enumerate(bits):
            buf += b
            sym = self._decode.get(buf)
            if sym is not None:
                out.append(sym)
                pos = i + 1
                buf = ""
                if sym == END:
                    return out, pos, True
        return out, pos, False


def _check_prefix_free(codes: Mapping[str, str]) -> None:
    ordered = sorted(codes.items(), key=lambda kv: kv[1])
    # In sorted order a prefix is immediately followed by its extensions.
    for (s1, c1), (s2, c2) in zip(ordered, ordered[1:]):
        if c2.startswith(c1):
            raise EncodingError(f"codeword for {s1!r} ({c1}) is a prefix of {s2!r} ({c2})")


def huffman_code_lengths(freqs: Mapping[str, int]) -> dict[str, int]:
    """Code lengths of the deterministic Huffman tree over ``freqs``."""
    return {s: len(c) for s, c in _huffman_codes(freqs).items()}


def _huffman_codes(freqs: Mapping[str, int]) -> dict[str, str]:
    if not freqs:
        raise EncodingError("cannot build a Huffman code from an empty corpus")
    if len(freqs) == 1:
        (sym,) = freqs
        return {sym: "0"}
    # heap key: (count, smallest contained symbol); ties are therefore
    # resolved by symbol order and never reach the node payload.
    heap = [(count, sym, sym) for sym, count in freqs.items()]
    heapq.heapify(heap)
    while len(heap) > 1:
        c0, k0, n0 = heapq.heappop(heap)
        c1, k1, n1 = heapq.heappop(heap)
        heapq.heappush(heap, (c0 + c1, min(k0, k1), (n0, n1)))
    codes: dict[str, str] = {}

    def walk(node, prefix):
        if isinstance(node, str):
            codes[node] = prefix
        else:
            walk(node[0], prefix + "0")
            walk(node[1], prefix + "1")

    walk(heap[0][2], "")
    return codes


def build_huffman(corpus_symbol_frequencies: Mapping[str, int]) -> Codebook:
    """Huffman codebook from symbol counts; END and UNK get count 1 if absent."""
    freqs = {s: int(c) for s, c in corpus_symbol_frequencies.items() if c > 0}
    if not freqs:
        raise EncodingError("cannot build a Huffman code from an empty corpus")
    for tok in RESERVED:
        freqs.setdefault(tok, 1)
    return Codebook(_huffman_codes(freqs), mode="huffman")


def build_fixed_width(symbols: Iterable[str], width: int) -> Codebook:
    """Assign ``width``-bit codes to sorted ``symbols`` followed by END, UNK."""
    syms = sorted(set(symbols) - set(RESERVED)) + list(RESERVED)
    if len(syms) > 2**width:
        raise EncodingError(f"{len(syms)} symbols do not fit in {width} bits")
    return Codebook(
        {s: format(i, f"0{width}b") for i, s in enumerate(syms)},
        mode="fixed_width",
        width=width,
    )


def symbol_frequencies(word_counts: Mapping[str, int]) -> dict[str, int]:
    freqs: dict[str, int] = {}
    for word, count in word_counts.items():
        for ch in word:
            freqs[ch] = freqs.get(ch, 0) + count
    return freqs


def encoded_length(word: str, cb: Codebook) -> int:
    return sum(len(cb.code_for(ch)) for ch in word) + len(cb.end_code)


def encode(word: str, cb: Codebook, r: int) -> EncodedWord:
    body = "".join(cb.code_for(ch) for ch in word) + cb.end_code
    if len(body) > r:
        raise WordTooLong(word, len(body), r)
    return EncodedWord(body + "0" * (r - len(body)))


def decode(bits: str | EncodedWord, cb: Codebook) -> str:
    """Inverse of :func:`encode`; everything after END is ignored."""
    if isinstance(bits, EncodedWord):
        bits = bits.bits
    symbols, _, hit_end = cb.decode_symbols(bits)
    if not hit_end:
        raise EncodingError("bitstring does not contain an END codeword")
    return "".join(UNKNOWN_CHAR if s == UNK else s for s in symbols[:-1])


def is_complete(p: str, cb: Codebook) -> bool:
    """True iff greedy decoding consumes all of ``p`` and ends with END."""
    _, consumed, hit_end = cb.decode_symbols(p)
    return hit_end and consumed == len(p)


def finished_length(p: str, cb: Codebook) -> int | None:
    """Length of the complete word inside ``p`` if only zero padding follows it.

    A prefix such as ``codes + END + "000"`` identifies exactly one encoded
    word (the padding is fixed), so it can be treated as finished.
    """
    _, consumed, hit_end = cb.decode_symbols(p)
    if hit_end and "1" not in p[consumed:]:
        return consumed
    return None


def save_codebook(cb: Codebook, path: str | Path) -> None:
    lines = []
    for sym, code in sorted(cb.symbol_to_code.items(), key=lambda kv: kv[1]):
        name = sym if sym in RESERVED else str(ord(sym))
        lines.append(f"{name}\t{code}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_codebook(path: str | Path) -> Codebook:
    codes: dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            name, code = line.split("\t")
        except ValueError:
            raise EncodingError(f"{path}:{lineno}: expected '<symbol>\\t<bits>'") from None
        sym = name if name in RESERVED else chr(int(name))
        if sym in codes:
            raise EncodingError(f"{path}:{lineno}: duplicate symbol {name}")
        codes[sym] = code
    widths = {len(c) for c in codes.values()}
    if len(widths) == 1:
        return Codebook(codes, mode="fixed_width", width=widths.pop())
    return Codebook(codes, mode="huffman")


def kraft_sum(cb: Codebook) -> float:
    return sum(2.0 ** -len(c) for c in cb.symbol_to_code.values())


def all_bitstrings(length: int) -> Iterable[str]:
    for bits in itertools.product("01", repeat=length):
        yield "".join(bits)
