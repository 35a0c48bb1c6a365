"""Image-wise video generator: frame-time embedding, upscale blocks and per-stage headers."""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from metanerv.engine import ops
from metanerv.engine.tensor import Tape, Tensor
from metanerv.types.errors import DomainError, LengthMismatchError, ModelError
from metanerv.types.models import ModelConfig, ModelParams, MultiResOutput, TimeNorm


@dataclass(frozen=True, slots=True)
class ParamSpec:
    name: str
    shape: tuple[int, ...]

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    @property
    def prunable(self) -> bool:
        return self.name.endswith(".weight")

    @property
    def fan_in(self) -> int:
        # matrices are stored in x out; conv weights are out x in x k x k
        if len(self.shape) == 2:
            return self.shape[0]
        return math.prod(self.shape[1:])


def param_layout(cfg: ModelConfig) -> list[ParamSpec]:
    """Stable flattening order: embed MLP, norm branch, blocks, headers."""
    seed_size = cfg.channels[0] * cfg.seed_h * cfg.seed_w
    pe_dim = 2 * cfg.pe_l
    layout = [
        ParamSpec("embed.0.weight", (pe_dim, cfg.embed_dim)),
        ParamSpec("embed.0.bias", (cfg.embed_dim,)),
        ParamSpec("embed.1.weight", (cfg.embed_dim, seed_size)),
        ParamSpec("embed.1.bias", (seed_size,)),
    ]
    if cfg.norm_dim > 0:
        layout += [
            ParamSpec("norm.0.weight", (pe_dim, cfg.norm_dim)),
            ParamSpec("norm.0.bias", (cfg.norm_dim,)),
            ParamSpec("norm.1.weight", (cfg.norm_dim, 2 * cfg.channels[0])),
            ParamSpec("norm.1.bias", (2 * cfg.channels[0],)),
        ]
    k = cfg.kernel_size
    for i, s in enumerate(cfg.scale_factors):
        lifted = cfg.channels[i + 1] * s * s
        layout += [
            ParamSpec(f"blocks.{i}.weight", (lifted, cfg.channels[i], k, k)),
            ParamSpec(f"blocks.{i}.bias", (lifted,)),
        ]
    hk = cfg.header_kernel
    for i in range(cfg.num_blocks):
        layout += [
            ParamSpec(f"headers.{i}.weight", (3, cfg.channels[i + 1], hk, hk)),
            ParamSpec(f"headers.{i}.bias", (3,)),
        ]
    return layout


def parameter_count(cfg: ModelConfig) -> int:
    return sum(spec.size for spec in param_layout(cfg))


def init_params(cfg: ModelConfig, seed: int = 0) -> ModelParams:
    """Kaiming-uniform (fan-in) weights and zero biases."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for spec in param_layout(cfg):
        if spec.prunable:
            bound = math.sqrt(6.0 / spec.fan_in)
            tensors[spec.name] = rng.uniform(-bound, bound, size=spec.shape)
        else:
            tensors[spec.name] = np.zeros(spec.shape)
    return ModelParams(cfg, tensors)


def zero_params(cfg: ModelConfig) -> ModelParams:
    return ModelParams(cfg, {spec.name: np.zeros(spec.shape) for spec in param_layout(cfg)})


def flatten_params(params: ModelParams) -> np.ndarray:
    return np.concatenate(
        [params.tensors[spec.name].reshape(-1) for spec in param_layout(params.config)]
    ).astype(np.float64)


def unflatten_params(flat: np.ndarray, cfg: ModelConfig) -> ModelParams:
    layout = param_layout(cfg)
    expected = sum(spec.size for spec in layout)
    if flat.ndim != 1 or flat.size != expected:
        raise LengthMismatchError(f"expected {expected} parameters, got {flat.size}")
    tensors: dict[str, np.ndarray] = {}
    offset = 0
    for spec in layout:
        tensors[spec.name] = flat[offset : offset + spec.size].reshape(spec.shape).copy()
        offset += spec.size
    return ModelParams(cfg, tensors)


def flatten_grads(weights: Mapping[str, Tensor], cfg: ModelConfig) -> np.ndarray:
    """Collect gradients of watched parameters in layout order."""
    parts = []
    for spec in param_layout(cfg):
        grad = weights[spec.name].grad
        parts.append(np.zeros(spec.size) if grad is None else grad.reshape(-1))
    return np.concatenate(parts)


def watch_params(tape: Tape, params: ModelParams) -> dict[str, Tensor]:
    return {name: tape.watch(value) for name, value in params.tensors.items()}


def positional_encoding(t: float, b: float, l: int) -> np.ndarray:
    """[sin(b^0 pi t), cos(b^0 pi t), ..., sin(b^(l-1) pi t), cos(b^(l-1) pi t)]."""
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"frame time {t} outside [0, 1]")
    angles = (b ** np.arange(l)) * math.pi * t
    out = np.empty(2 * l)
    out[0::2] = np.sin(angles)
    out[1::2] = np.cos(angles)
    return out


def frame_times(total: int, t_norm: TimeNorm) -> np.ndarray:
    index = np.arange(total, dtype=np.float64)
    if t_norm is TimeNorm.INDEX_OVER_N:
        return index / total
    return index / max(total - 1, 1)


def _as_weights(params: ModelParams | Mapping[str, Tensor]) -> Mapping[str, Tensor]:
    if isinstance(params, ModelParams):
        return {name: Tensor(value) for name, value in params.tensors.items()}
    return params


def embed(t: float, params: ModelParams | Mapping[str, Tensor], cfg: ModelConfig) -> Tensor:
    """PE -> two-layer GELU MLP -> seed map, with the optional time-conditioned affine."""
    weights = _as_weights(params)
    pe = Tensor.constant(positional_encoding(t, cfg.pe_b, cfg.pe_l)[None, :])
    hidden = ops.gelu(
        ops.add_bias(ops.matmul(pe, weights["embed.0.weight"]), weights["embed.0.bias"])
    )
    seed = ops.add_bias(ops.matmul(hidden, weights["embed.1.weight"]), weights["embed.1.bias"])
    seed = ops.reshape(seed, (cfg.channels[0], cfg.seed_h, cfg.seed_w))
    if cfg.norm_dim > 0:
        cond = ops.gelu(
            ops.add_bias(ops.matmul(pe, weights["norm.0.weight"]), weights["norm.0.bias"])
        )
        affine = ops.add_bias(ops.matmul(cond, weights["norm.1.weight"]), weights["norm.1.bias"])
        seed = ops.channel_affine(seed, affine)
    return seed


def forward_multires(
    t: float,
    params: ModelParams | Mapping[str, Tensor],
    cfg: ModelConfig | None = None,
) -> MultiResOutput:
    if cfg is None:
        if not isinstance(params, ModelParams):
            raise ModelError("cfg is required when passing watched tensors")
        cfg = params.config
    weights = _as_weights(params)
    feature = embed(t, weights, cfg)
    pad = (cfg.kernel_size - 1) // 2
    header_pad = (cfg.header_kernel - 1) // 2
    frames: list[Tensor] = []
    for i, s in enumerate(cfg.scale_factors):
        lifted = ops.conv2d(
            feature, weights[f"blocks.{i}.weight"], weights[f"blocks.{i}.bias"], pad
        )
        feature = ops.gelu(ops.pixel_shuffle(lifted, s))
        head = ops.conv2d(
            feature, weights[f"headers.{i}.weight"], weights[f"headers.{i}.bias"], header_pad
        )
        frames.append(ops.sigmoid(head))
    return MultiResOutput(frames=frames)


def render_video(params: ModelParams, total: int, count: int | None = None) -> np.ndarray:
    """Final-head frames for the first ``count`` of ``total`` frame times."""
    times = frame_times(total, params.config.t_norm)[: count or total]
    return np.stack([forward_multires(float(t), params).final.data for t in times])
