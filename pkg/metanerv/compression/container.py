"""MNRC1 compressed-model container: pruning mask, quantization grids and Huffman payload."""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from metanerv.compression.huffman import entropy_decode, entropy_encode
from metanerv.compression.quantization import check_bits, dequantize, quantize
from metanerv.model import parameter_count
from metanerv.types.errors import (
    BadMagicError,
    ChecksumMismatchError,
    CompressionError,
    ConfigurationError,
    EmptyVideoError,
    ShapeMismatchError,
    StorageError,
    VersionUnsupportedError,
)
from metanerv.types.models import CompressedModel, ModelConfig, QuantizedTensor, Video

MAGIC = b"MNRC1"
VERSION = 1
CODER_HUFFMAN = 1

_PREFIX = struct.Struct("<5sHBBI")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_TENSOR = struct.Struct("<ddQ")


def compress_model(
    flat: np.ndarray,
    cfg: ModelConfig,
    q_bits: int,
    mask: np.ndarray | None = None,
) -> CompressedModel:
    """Quantize the kept entries per tensor and entropy-code them in layout order."""
    check_bits(q_bits)
    flat = np.asarray(flat, dtype=np.float64)
    if flat.size != parameter_count(cfg):
        raise ShapeMismatchError(f"expected {parameter_count(cfg)} parameters, got {flat.size}")
    mask = np.ones(flat.size, dtype=bool) if mask is None else mask.astype(bool)
    tensors = quantize(flat, cfg, q_bits, mask)
    symbols = np.concatenate([t.q.reshape(-1) for t in tensors])
    stream = entropy_encode(symbols, 1 << q_bits)
    return CompressedModel(
        config=cfg,
        mask=mask,
        q_bits=q_bits,
        scales=[t.scale for t in tensors],
        zero_points=[t.zero_point for t in tensors],
        counts=[int(t.q.size) for t in tensors],
        code_lengths=stream.code_lengths,
        payload=stream.payload,
        payload_bits=stream.payload_bits,
        checksum=zlib.crc32(stream.payload),
    )


def decompress_model(compressed: CompressedModel) -> np.ndarray:
    """Dequantized flat parameters; pruned entries are exact zeros."""
    if zlib.crc32(compressed.payload) != compressed.checksum:
        raise ChecksumMismatchError("payload CRC-32 does not match the stored checksum")
    total = sum(compressed.counts)
    symbols = entropy_decode(
        compressed.payload, compressed.payload_bits, compressed.code_lengths, total
    )
    tensors: list[QuantizedTensor] = []
    offset = 0
    for scale, zero, count in zip(
        compressed.scales, compressed.zero_points, compressed.counts, strict=True
    ):
        tensors.append(QuantizedTensor(symbols[offset : offset + count], scale, zero))
        offset += count
    return dequantize(tensors, compressed.config, compressed.mask)


def encode_container(compressed: CompressedModel) -> bytes:
    config_json = json.dumps(compressed.config.to_dict(), sort_keys=True).encode("utf-8")
    parts = [
        _PREFIX.pack(MAGIC, VERSION, CODER_HUFFMAN, compressed.q_bits, len(config_json)),
        config_json,
        _U64.pack(compressed.mask.size),
        np.packbits(compressed.mask).tobytes(),
        _U32.pack(len(compressed.scales)),
    ]
    for scale, zero, count in zip(
        compressed.scales, compressed.zero_points, compressed.counts, strict=True
    ):
        parts.append(_TENSOR.pack(scale, zero, count))
    parts += [
        compressed.code_lengths.astype(np.uint8).tobytes(),
        _U64.pack(compressed.payload_bits),
        compressed.payload,
        _U32.pack(compressed.checksum),
    ]
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.offset = 0

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise CompressionError("container is truncated")
        chunk = self.data[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, layout: struct.Struct) -> tuple:
        return layout.unpack(self.take(layout.size))


def decode_container(data: bytes) -> CompressedModel:
    if data[: len(MAGIC)] != MAGIC:
        raise BadMagicError(f"container does not start with {MAGIC!r}")
    reader = _Reader(data)
    _, version, coder, q_bits, config_len = reader.unpack(_PREFIX)
    if version != VERSION:
        raise VersionUnsupportedError(f"container version {version} is not supported")
    if coder != CODER_HUFFMAN:
        raise VersionUnsupportedError(f"entropy coder {coder} is not supported")
    check_bits(q_bits)
    try:
        config = ModelConfig.from_dict(json.loads(reader.take(config_len).decode("utf-8")))
    except (ValueError, KeyError, TypeError, ConfigurationError) as exc:
        raise CompressionError("container holds an unreadable model config") from exc

    (size,) = reader.unpack(_U64)
    packed = np.frombuffer(reader.take((size + 7) // 8), dtype=np.uint8)
    mask = np.unpackbits(packed, count=size).astype(bool)
    (n_tensors,) = reader.unpack(_U32)
    scales, zeros, counts = [], [], []
    for _ in range(n_tensors):
        scale, zero, count = reader.unpack(_TENSOR)
        scales.append(scale)
        zeros.append(zero)
        counts.append(int(count))
    lengths = np.frombuffer(reader.take(1 << q_bits), dtype=np.uint8).copy()
    (payload_bits,) = reader.unpack(_U64)
    payload = reader.take((payload_bits + 7) // 8)
    (checksum,) = reader.unpack(_U32)
    if reader.offset != len(data):
        raise CompressionError("container has trailing bytes")
    if zlib.crc32(payload) != checksum:
        raise ChecksumMismatchError("payload CRC-32 does not match the stored checksum")
    return CompressedModel(
        config=config,
        mask=mask,
        q_bits=q_bits,
        scales=scales,
        zero_points=zeros,
        counts=counts,
        code_lengths=lengths,
        payload=payload,
        payload_bits=payload_bits,
        checksum=checksum,
    )


def write_container(compressed: CompressedModel, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_container(compressed))
    except OSError as exc:
        raise StorageError("cannot write container", str(path)) from exc
    return path


def read_container(path: str | Path) -> CompressedModel:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise StorageError("cannot read container", str(path)) from exc
    return decode_container(data)


def bits_per_pixel(bits: int, video: Video) -> float:
    if video.pixel_count == 0:
        raise EmptyVideoError(f"video {video.id!r} has no pixels")
    return bits / video.pixel_count


def bpp(compressed: CompressedModel, video: Video) -> float:
    """Total container bits over H * W * N."""
    return bits_per_pixel(len(encode_container(compressed)) * 8, video)
