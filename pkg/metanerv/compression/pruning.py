"""Global magnitude pruning over all weight tensors, biases exempt."""

from __future__ import annotations

import math

import numpy as np

from metanerv.fitting import fit_video
from metanerv.model import flatten_params, param_layout
from metanerv.types.errors import InvalidRatioError, ShapeMismatchError
from metanerv.types.models import LossConfig, ModelConfig, ModelParams, Video


def prunable_positions(cfg: ModelConfig) -> np.ndarray:
    """Boolean map over the flat vector marking weight (non-bias) entries."""
    return np.concatenate(
        [np.full(spec.size, spec.prunable, dtype=bool) for spec in param_layout(cfg)]
    )


def prune_global_magnitude(
    params: ModelParams | np.ndarray,
    ratio: float,
    prunable: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Zero the ``floor(ratio * #prunable)`` smallest-magnitude weights.

    Returns the pruned flat vector and a keep-mask of the same length. Ties are
    broken by flat index, lower index pruned first. A bare array is treated as
    entirely prunable unless ``prunable`` says otherwise.
    """
    if not 0.0 <= ratio < 1.0:
        raise InvalidRatioError(f"pruning ratio must be within [0, 1), got {ratio}")
    if isinstance(params, ModelParams):
        flat = flatten_params(params)
        prunable = prunable_positions(params.config) if prunable is None else prunable
    else:
        flat = np.asarray(params, dtype=np.float64).copy()
        prunable = np.ones(flat.size, dtype=bool) if prunable is None else prunable
    if prunable.shape != flat.shape:
        raise ShapeMismatchError(f"prunable map {prunable.shape} vs params {flat.shape}")

    candidates = np.flatnonzero(prunable)
    count = math.floor(ratio * candidates.size)
    mask = np.ones(flat.size, dtype=bool)
    if count:
        order = np.argsort(np.abs(flat[candidates]), kind="stable")
        mask[candidates[order[:count]]] = False
    return np.where(mask, flat, 0.0), mask


def finetune_pruned(
    flat: np.ndarray,
    mask: np.ndarray,
    video: Video,
    steps: int,
    model_cfg: ModelConfig,
    loss_cfg: LossConfig,
    lr: float = 1e-3,
) -> np.ndarray:
    """Adam fine-tuning with pruned entries forced back to zero after every step."""
    if mask.shape != flat.shape:
        raise ShapeMismatchError(f"mask {mask.shape} vs params {flat.shape}")
    if steps == 0:
        return flat.copy()
    return fit_video(flat, video, steps, model_cfg, loss_cfg, lr, mask=mask).params
