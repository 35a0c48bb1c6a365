"""Reconstruction losses (L1 + SSIM fusion, multi-resolution) and quality metrics."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from metanerv.engine import ops
from metanerv.engine.tensor import Tensor
from metanerv.types.errors import (
    NonIntegerFactorError,
    ShapeMismatchError,
    WindowTooLargeError,
)
from metanerv.types.models import LossConfig, MultiResOutput

PSNR_CAP = 100.0
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)

Frame = Tensor | np.ndarray


def _tensor(x: Frame) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor.constant(x)


def _check_pair(x: Tensor, y: Tensor, operation: str) -> None:
    if x.shape != y.shape:
        raise ShapeMismatchError(f"{operation}: shapes {x.shape} and {y.shape} differ")


@lru_cache(maxsize=32)
def gaussian_kernel(window: int, sigma: float) -> np.ndarray:
    offsets = np.arange(window, dtype=np.float64) - (window - 1) / 2.0
    kernel = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    kernel /= kernel.sum()
    kernel.setflags(write=False)
    return kernel


def l1_loss(pred: Frame, gt: Frame) -> Tensor:
    pred, gt = _tensor(pred), _tensor(gt)
    _check_pair(pred, gt, "l1_loss")
    return ops.mean(ops.absolute(ops.sub(pred, gt)))


def _ssim_terms(x: Tensor, y: Tensor, cfg: LossConfig) -> tuple[Tensor, Tensor]:
    """Local luminance*structure map and contrast-structure map."""
    _check_pair(x, y, "ssim")
    if x.ndim != 3:
        raise ShapeMismatchError(f"ssim: expected C x H x W frames, got {x.shape}")
    if cfg.ssim_window > min(x.shape[1], x.shape[2]):
        raise WindowTooLargeError(f"ssim window {cfg.ssim_window} does not fit {x.shape[1:]}")
    kernel = gaussian_kernel(cfg.ssim_window, cfg.ssim_sigma)
    mu_x = ops.gaussian_filter(x, kernel)
    mu_y = ops.gaussian_filter(y, kernel)
    mu_xx = ops.mul(mu_x, mu_x)
    mu_yy = ops.mul(mu_y, mu_y)
    mu_xy = ops.mul(mu_x, mu_y)
    var_x = ops.sub(ops.gaussian_filter(ops.mul(x, x), kernel), mu_xx)
    var_y = ops.sub(ops.gaussian_filter(ops.mul(y, y), kernel), mu_yy)
    cov = ops.sub(ops.gaussian_filter(ops.mul(x, y), kernel), mu_xy)

    cs = ops.div(
        ops.shift(ops.scale(cov, 2.0), cfg.c2),
        ops.shift(ops.add(var_x, var_y), cfg.c2),
    )
    luminance = ops.div(
        ops.shift(ops.scale(mu_xy, 2.0), cfg.c1),
        ops.shift(ops.add(mu_xx, mu_yy), cfg.c1),
    )
    return ops.mul(luminance, cs), cs


def ssim(x: Frame, y: Frame, cfg: LossConfig) -> Tensor:
    """Mean Gaussian-windowed SSIM index over valid pixels and channels."""
    ssim_map, _ = _ssim_terms(_tensor(x), _tensor(y), cfg)
    return ops.mean(ssim_map)


def fusion_loss(pred: Frame, gt: Frame, cfg: LossConfig) -> Tensor:
    """alpha * L1 + (1 - alpha) * (1 - SSIM)."""
    pred, gt = _tensor(pred), _tensor(gt)
    if cfg.alpha == 1.0:
        return l1_loss(pred, gt)
    structural = ops.shift(ops.scale(ssim(pred, gt, cfg), -1.0), 1.0)
    if cfg.alpha == 0.0:
        return structural
    return ops.add(ops.scale(l1_loss(pred, gt), cfg.alpha), ops.scale(structural, 1.0 - cfg.alpha))


def pool_gt(gt: Frame, target_res: tuple[int, int]) -> Tensor:
    gt = _tensor(gt)
    h, w = gt.shape[1], gt.shape[2]
    th, tw = target_res
    if th < 1 or tw < 1 or h % th or w % tw or h // th != w // tw:
        raise NonIntegerFactorError(f"cannot pool {h}x{w} to {th}x{tw} with one integer factor")
    factor = h // th
    if factor == 1:
        return gt
    return ops.avg_pool2d(gt, factor)


def multires_loss(gt: Frame, heads: MultiResOutput, cfg: LossConfig) -> Tensor:
    """Weighted sum of fusion losses between each head and the pooled ground truth."""
    weights = cfg.weights_for(len(heads.frames))
    total: Tensor | None = None
    for frame, weight in zip(heads.frames, weights, strict=True):
        if weight == 0.0:
            continue
        target = pool_gt(gt, (frame.shape[1], frame.shape[2]))
        term = ops.scale(fusion_loss(frame, target, cfg), weight)
        total = term if total is None else ops.add(total, term)
    if total is None:
        return Tensor.constant(0.0)
    return total


def psnr(pred: np.ndarray, gt: np.ndarray) -> float:
    """PSNR in dB for a frame (C x H x W) or the per-frame mean for a video (N x C x H x W)."""
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeMismatchError(f"psnr: shapes {pred.shape} and {gt.shape} differ")
    if pred.ndim == 4:
        return float(np.mean([psnr(p, g) for p, g in zip(pred, gt, strict=True)]))
    mse = float(np.mean((pred - gt) ** 2))
    if mse < 1e-10:
        return PSNR_CAP
    return 10.0 * math.log10(1.0 / mse)


def ms_ssim_levels(height: int, width: int, window: int) -> int:
    levels = 0
    h, w = height, width
    while levels < len(MS_SSIM_WEIGHTS) and min(h, w) >= window:
        levels += 1
        h, w = h // 2, w // 2
    return levels


def _downsample(x: np.ndarray) -> np.ndarray:
    # odd trailing rows/columns are dropped before the dyadic pool
    h, w = x.shape[1] - x.shape[1] % 2, x.shape[2] - x.shape[2] % 2
    return ops.avg_pool2d(Tensor(x[:, :h, :w]), 2).data


def ms_ssim(x: np.ndarray, y: np.ndarray, cfg: LossConfig) -> float:
    """Multiscale SSIM on a frame, or the per-frame mean for a video."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeMismatchError(f"ms_ssim: shapes {x.shape} and {y.shape} differ")
    if x.ndim == 4:
        return float(np.mean([ms_ssim(a, b, cfg) for a, b in zip(x, y, strict=True)]))
    levels = ms_ssim_levels(x.shape[1], x.shape[2], cfg.ssim_window)
    if levels == 0:
        raise WindowTooLargeError(f"ms_ssim window {cfg.ssim_window} does not fit {x.shape[1:]}")
    weights = np.array(MS_SSIM_WEIGHTS[:levels])
    weights /= weights.sum()

    result = 1.0
    for level in range(levels):
        ssim_map, cs_map = _ssim_terms(Tensor(x), Tensor(y), cfg)
        # negative contrast terms are clipped so fractional powers stay real
        if level == levels - 1:
            value = max(float(np.mean(ssim_map.data)), 0.0)
        else:
            value = max(float(np.mean(cs_map.data)), 0.0)
            x, y = _downsample(x), _downsample(y)
        result *= value ** weights[level]
    return float(result)
