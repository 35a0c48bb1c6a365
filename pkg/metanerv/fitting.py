"""Gradient evaluation of the reconstruction objective and full-precision video fitting."""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from metanerv.engine import ops
from metanerv.engine.optim import adam_step
from metanerv.engine.tensor import Tape, Tensor, backward
from metanerv.model import (
    flatten_grads,
    forward_multires,
    frame_times,
    render_video,
    unflatten_params,
    watch_params,
)
from metanerv.losses import multires_loss, psnr
from metanerv.types.errors import ShapeMismatchError
from metanerv.types.models import LossConfig, ModelConfig, Video

Projection = Callable[[np.ndarray], np.ndarray]


@dataclass(slots=True)
class VideoObjective:
    """Mean per-frame multi-resolution loss of a generator on a (possibly partial) video."""

    model: ModelConfig
    loss: LossConfig

    def loss_and_grad(self, flat: np.ndarray, video: Video) -> tuple[float, np.ndarray]:
        if (video.height, video.width) != self.model.output_resolution:
            raise ShapeMismatchError(
                f"video {video.id!r} is {video.height}x{video.width}, "
                f"model renders {self.model.output_resolution[0]}x{self.model.output_resolution[1]}"
            )
        tape = Tape()
        weights = watch_params(tape, unflatten_params(flat, self.model))
        times = frame_times(video.total_frames or video.n_frames, self.model.t_norm)
        total: Tensor | None = None
        for index in range(video.n_frames):
            heads = forward_multires(float(times[index]), weights, self.model)
            term = multires_loss(video.frames[index], heads, self.loss)
            total = term if total is None else ops.add(total, term)
        loss = ops.scale(total, 1.0 / video.n_frames)
        backward(loss, tape)
        return loss.item(), flatten_grads(weights, self.model)


def reconstruct(flat: np.ndarray, cfg: ModelConfig, video: Video) -> np.ndarray:
    """Final-head frames for every frame time of ``video``."""
    params = unflatten_params(flat, cfg)
    return render_video(params, video.total_frames or video.n_frames, video.n_frames)


def video_psnr(flat: np.ndarray, cfg: ModelConfig, video: Video) -> float:
    return psnr(reconstruct(flat, cfg, video), video.frames)


@dataclass(slots=True)
class FitResult:
    params: np.ndarray
    losses: list[float] = field(default_factory=list)


def fit_video(
    flat: np.ndarray,
    video: Video,
    steps: int,
    model_cfg: ModelConfig,
    loss_cfg: LossConfig,
    lr: float = 1e-3,
    *,
    mask: np.ndarray | None = None,
    projection: Projection | None = None,
) -> FitResult:
    """Adam fitting of one video.

    ``mask`` zeroes pruned entries after every step. ``projection`` maps the
    weights used in the forward pass (straight-through: its gradient is taken
    as identity).
    """
    objective = VideoObjective(model_cfg, loss_cfg)
    params = flat.copy()
    if mask is not None:
        params = params * mask
    state = None
    losses: list[float] = []
    for _ in range(steps):
        forward_weights = projection(params) if projection is not None else params
        loss, grad = objective.loss_and_grad(forward_weights, video)
        losses.append(loss)
        params, state = adam_step(params, grad, state, lr)
        if mask is not None:
            params = params * mask
    return FitResult(params=params, losses=losses)
