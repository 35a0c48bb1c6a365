"""Per-tensor linear quantization and straight-through quantization-aware fine-tuning."""

from __future__ import annotations

import numpy as np

from metanerv.fitting import fit_video
from metanerv.model import param_layout
from metanerv.types.errors import InvalidBitsError, ShapeMismatchError
from metanerv.types.models import LossConfig, ModelConfig, QuantizedTensor, Video

MIN_BITS = 2
MAX_BITS = 16


def check_bits(q_bits: int) -> None:
    if not MIN_BITS <= q_bits <= MAX_BITS:
        raise InvalidBitsError(f"q_bits must be within [{MIN_BITS}, {MAX_BITS}], got {q_bits}")


def quantize_tensor(values: np.ndarray, q_bits: int) -> QuantizedTensor:
    """q = round((w - min) / scale) with scale = (max - min) / (2^b - 1).

    A constant (or empty) tensor maps to q = 0 with scale 1.
    """
    check_bits(q_bits)
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return QuantizedTensor(np.zeros(0, dtype=np.int64), 1.0, 0.0)
    low, high = float(values.min()), float(values.max())
    if high == low:
        return QuantizedTensor(np.zeros(values.shape, dtype=np.int64), 1.0, low)
    levels = (1 << q_bits) - 1
    # multiply before dividing so exact midpoints like 0.5 on [0, 1] round up
    q = np.floor((values - low) * levels / (high - low) + 0.5)
    q = np.clip(q, 0, levels).astype(np.int64)
    return QuantizedTensor(q, (high - low) / levels, low)


def dequantize_tensor(tensor: QuantizedTensor) -> np.ndarray:
    return tensor.q.astype(np.float64) * tensor.scale + tensor.zero_point


def _segments(cfg: ModelConfig) -> list[slice]:
    out, offset = [], 0
    for spec in param_layout(cfg):
        out.append(slice(offset, offset + spec.size))
        offset += spec.size
    return out


def quantize(
    flat: np.ndarray,
    cfg: ModelConfig,
    q_bits: int,
    mask: np.ndarray | None = None,
) -> list[QuantizedTensor]:
    """Quantize each layout tensor over its kept entries, in layout order."""
    check_bits(q_bits)
    if mask is not None and mask.shape != flat.shape:
        raise ShapeMismatchError(f"mask {mask.shape} vs params {flat.shape}")
    out = []
    for segment in _segments(cfg):
        values = flat[segment]
        if mask is not None:
            values = values[mask[segment]]
        out.append(quantize_tensor(values, q_bits))
    return out


def dequantize(
    tensors: list[QuantizedTensor],
    cfg: ModelConfig,
    mask: np.ndarray | None = None,
) -> np.ndarray:
    """Inverse of ``quantize``; masked entries come back as exact zeros."""
    segments = _segments(cfg)
    if len(tensors) != len(segments):
        raise ShapeMismatchError(f"expected {len(segments)} tensors, got {len(tensors)}")
    flat = np.zeros(segments[-1].stop)
    for segment, tensor in zip(segments, tensors, strict=True):
        values = dequantize_tensor(tensor)
        if mask is None:
            flat[segment] = values
        else:
            view = flat[segment]
            view[mask[segment]] = values
    return flat


def fake_quantize(
    flat: np.ndarray,
    cfg: ModelConfig,
    q_bits: int,
    mask: np.ndarray | None = None,
) -> np.ndarray:
    return dequantize(quantize(flat, cfg, q_bits, mask), cfg, mask)


def quantization_aware_finetune(
    flat: np.ndarray,
    video: Video,
    steps: int,
    q_bits: int,
    model_cfg: ModelConfig,
    loss_cfg: LossConfig,
    lr: float = 1e-3,
    *,
    mask: np.ndarray | None = None,
) -> np.ndarray:
    """Fine-tune full-precision weights while the forward pass sees their quantized copy."""
    check_bits(q_bits)
    if steps == 0:
        return flat.copy()
    return fit_video(
        flat,
        video,
        steps,
        model_cfg,
        loss_cfg,
        lr,
        mask=mask,
        projection=lambda weights: fake_quantize(weights, model_cfg, q_bits, mask),
    ).params
