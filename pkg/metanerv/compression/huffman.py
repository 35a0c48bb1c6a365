"""Canonical Huffman coding of quantized symbol streams.

The codebook is the code length of every symbol in the alphabet (0 for unused
symbols). A stream with a single distinct symbol gets length 1 in the codebook
and no payload bits; the decoder repeats it ``count`` times.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass

import numpy as np

from metanerv.types.errors import CompressionError


@dataclass(slots=True)
class EncodedStream:
    payload: bytes
    payload_bits: int
    code_lengths: np.ndarray


def code_lengths(symbols: np.ndarray, alphabet_size: int) -> np.ndarray:
    """Minimum-redundancy code lengths from the empirical histogram."""
    symbols = np.asarray(symbols, dtype=np.int64)
    if symbols.size == 0:
        raise CompressionError("cannot build a code for an empty symbol stream")
    if symbols.min() < 0 or symbols.max() >= alphabet_size:
        raise CompressionError(f"symbols must lie in [0, {alphabet_size})")
    counts = np.bincount(symbols, minlength=alphabet_size)
    lengths = np.zeros(alphabet_size, dtype=np.uint8)
    used = np.flatnonzero(counts)
    if used.size == 1:
        lengths[used[0]] = 1
        return lengths

    # heap entries: (weight, tiebreak, symbols under this node)
    tiebreak = itertools.count()
    heap = [(int(counts[s]), next(tiebreak), [int(s)]) for s in used]
    heapq.heapify(heap)
    depth = np.zeros(alphabet_size, dtype=np.int64)
    while len(heap) > 1:
        w1, _, left = heapq.heappop(heap)
        w2, _, right = heapq.heappop(heap)
        merged = left + right
        depth[merged] += 1
        heapq.heappush(heap, (w1 + w2, next(tiebreak), merged))
    if depth.max() > 255:
        raise CompressionError("code length exceeds the 8-bit codebook limit")
    return depth.astype(np.uint8)


def canonical_codes(lengths: np.ndarray) -> dict[int, tuple[int, int]]:
    """symbol -> (code, length), assigned in (length, symbol) order."""
    order = sorted((int(length), int(symbol)) for symbol, length in enumerate(lengths) if length)
    codes: dict[int, tuple[int, int]] = {}
    code, previous = 0, 0
    for length, symbol in order:
        code <<= length - previous
        codes[symbol] = (code, length)
        code += 1
        previous = length
    return codes


def entropy_encode(symbols: np.ndarray, alphabet_size: int) -> EncodedStream:
    symbols = np.asarray(symbols, dtype=np.int64)
    lengths = code_lengths(symbols, alphabet_size)
    if np.count_nonzero(lengths) == 1:
        return EncodedStream(b"", 0, lengths)
    codes = canonical_codes(lengths)
    table = {s: format(code, f"0{length}b") for s, (code, length) in codes.items()}
    bits = "".join(table[s] for s in symbols.tolist())
    padded = bits + "0" * (-len(bits) % 8)
    payload = int(padded, 2).to_bytes(len(padded) // 8, "big")
    return EncodedStream(payload, len(bits), lengths)


def entropy_decode(
    payload: bytes, payload_bits: int, lengths: np.ndarray, count: int
) -> np.ndarray:
    """Inverse of ``entropy_encode`` for a stream of ``count`` symbols."""
    used = np.flatnonzero(lengths)
    if used.size == 0:
        if count:
            raise CompressionError("codebook is empty but symbols were expected")
        return np.zeros(0, dtype=np.int64)
    if used.size == 1:
        return np.full(count, int(used[0]), dtype=np.int64)
    if payload_bits > len(payload) * 8:
        raise CompressionError("payload is shorter than its declared bit length")

    lookup = {(length, code): s for s, (code, length) in canonical_codes(lengths).items()}
    max_length = int(lengths.max())
    bits = bin(int.from_bytes(payload, "big"))[2:].zfill(len(payload) * 8)[:payload_bits]
    out = np.empty(count, dtype=np.int64)
    produced, code, length = 0, 0, 0
    for bit in bits:
        code = (code << 1) | (bit == "1")
        length += 1
        symbol = lookup.get((length, code))
        if symbol is not None:
            if produced == count:
                raise CompressionError("payload holds more symbols than declared")
            out[produced] = symbol
            produced += 1
            code, length = 0, 0
        elif length > max_length:
            raise CompressionError("payload contains an invalid code")
    if produced != count or length:
        raise CompressionError(f"decoded {produced} symbols, expected {count}")
    return out
