from __future__ import annotations

from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any

import numpy as np

from metanerv.types.errors import ConfigurationError, EmptyVideoError, InvalidShapeError

if TYPE_CHECKING:
    from metanerv.engine.tensor import Tensor


class TimeNorm(str, Enum):
    INDEX_OVER_N = "index_over_n"
    INDEX_OVER_N_MINUS_1 = "index_over_n_minus_1"


class GradMode(str, Enum):
    FIRST_ORDER = "first_order"


class SyntheticFamily(str, Enum):
    MOVING_BOX = "moving_box"
    BOUNCING_BALL = "bouncing_ball"
    GRADIENT_PAN = "gradient_pan"
    SECTOR_SCAN = "sector_scan"


class VideoFormat(str, Enum):
    PNG = "png"
    RAW = "raw"


@dataclass(frozen=True, slots=True)
class ModelConfig:
    scale_factors: tuple[int, ...] = (2, 2, 2)
    seed_h: int = 6
    seed_w: int = 5
    channels: tuple[int, ...] = (32, 24, 16, 12)
    pe_b: float = 1.25
    pe_l: int = 20
    embed_dim: int = 196
    norm_dim: int = 128
    t_norm: TimeNorm = TimeNorm.INDEX_OVER_N_MINUS_1
    kernel_size: int = 3
    header_kernel: int = 3

    def __post_init__(self) -> None:
        if not self.scale_factors or any(s < 1 for s in self.scale_factors):
            raise ConfigurationError("scale_factors must be a nonempty list of positive ints")
        if len(self.channels) != len(self.scale_factors) + 1:
            raise ConfigurationError("channels must have one more entry than scale_factors")
        if any(c < 1 for c in self.channels):
            raise ConfigurationError("channels must be positive")
        if self.seed_h < 1 or self.seed_w < 1:
            raise ConfigurationError("seed_h and seed_w must be positive")
        if self.pe_l < 1:
            raise ConfigurationError("pe_l must be >= 1")
        if self.pe_b <= 1:
            raise ConfigurationError("pe_b must be > 1")
        if self.embed_dim < 1 or self.norm_dim < 0:
            raise ConfigurationError("embed_dim must be >= 1 and norm_dim >= 0")
        if self.kernel_size % 2 == 0 or self.header_kernel % 2 == 0:
            raise ConfigurationError("kernel sizes must be odd")

    @classmethod
    def full_scale(cls) -> ModelConfig:
        """Full-scale layout producing 240x320 frames from a 3x4 seed map."""
        return cls(
            scale_factors=(5, 2, 2, 2, 2),
            seed_h=3,
            seed_w=4,
            channels=(128, 128, 96, 64, 48, 32),
            pe_l=80,
        )

    @property
    def num_blocks(self) -> int:
        return len(self.scale_factors)

    @property
    def head_resolutions(self) -> list[tuple[int, int]]:
        out: list[tuple[int, int]] = []
        h, w = self.seed_h, self.seed_w
        for s in self.scale_factors:
            h, w = h * s, w * s
            out.append((h, w))
        return out

    @property
    def output_resolution(self) -> tuple[int, int]:
        return self.head_resolutions[-1]

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["scale_factors"] = list(self.scale_factors)
        data["channels"] = list(self.channels)
        data["t_norm"] = self.t_norm.value
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ModelConfig:
        return cls(
            scale_factors=tuple(int(s) for s in data["scale_factors"]),
            seed_h=int(data["seed_h"]),
            seed_w=int(data["seed_w"]),
            channels=tuple(int(c) for c in data["channels"]),
            pe_b=float(data["pe_b"]),
            pe_l=int(data["pe_l"]),
            embed_dim=int(data["embed_dim"]),
            norm_dim=int(data["norm_dim"]),
            t_norm=TimeNorm(data["t_norm"]),
            kernel_size=int(data.get("kernel_size", 3)),
            header_kernel=int(data.get("header_kernel", 3)),
        )


@dataclass(frozen=True, slots=True)
class LossConfig:
    alpha: float = 0.7
    head_weights: tuple[float, ...] | None = None
    ssim_window: int = 7
    ssim_sigma: float = 1.5
    c1: float = 0.01**2
    c2: float = 0.03**2
    spatial: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigurationError("alpha must be within [0, 1]")
        if self.ssim_window < 1 or self.ssim_window % 2 == 0:
            raise ConfigurationError("ssim_window must be a positive odd int")
        if self.ssim_sigma <= 0:
            raise ConfigurationError("ssim_sigma must be > 0")
        if self.head_weights is not None:
            if any(w < 0 for w in self.head_weights):
                raise ConfigurationError("head_weights must be nonnegative")
            if abs(sum(self.head_weights) - 1.0) > 1e-9:
                raise ConfigurationError("head_weights must sum to 1")

    def weights_for(self, k: int) -> tuple[float, ...]:
        """Per-head weights; only the final head counts when spatial guidance is off."""
        if not self.spatial:
            return tuple(0.0 for _ in range(k - 1)) + (1.0,)
        if self.head_weights is None:
            return tuple(1.0 / k for _ in range(k))
        if len(self.head_weights) != k:
            raise ConfigurationError(f"head_weights has {len(self.head_weights)} entries, need {k}")
        return self.head_weights


@dataclass(frozen=True, slots=True)
class MetaConfig:
    inner_steps: int = 3
    outer_steps: int = 500
    outer_lr: float = 1e-4
    grad_mode: GradMode = GradMode.FIRST_ORDER
    beta_init: float = 1e-2
    beta_min: float = 1e-6
    beta_max: float = 1.0
    progressive: bool = True
    progressive_rate: float = 1.0
    tasks_per_step: int = 1
    loss: LossConfig = field(default_factory=LossConfig)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.inner_steps < 0:
            raise ConfigurationError("inner_steps must be >= 0")
        if self.outer_steps < 1:
            raise ConfigurationError("outer_steps must be >= 1")
        if self.outer_lr <= 0:
            raise ConfigurationError("outer_lr must be > 0")
        if not 0 < self.beta_min <= self.beta_max:
            raise ConfigurationError("beta bounds must satisfy 0 < beta_min <= beta_max")
        if self.progressive_rate <= 0:
            raise ConfigurationError("progressive_rate must be > 0")
        if self.tasks_per_step < 1:
            raise ConfigurationError("tasks_per_step must be >= 1")


@dataclass(slots=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, size: int) -> AdamState:
        return cls(m=np.zeros(size), v=np.zeros(size), step=0)

    def copy(self) -> AdamState:
        return AdamState(m=self.m.copy(), v=self.v.copy(), step=self.step)


@dataclass(slots=True)
class ModelParams:
    """Named generator tensors in the stable flattening order of ``param_layout``."""

    config: ModelConfig
    tensors: dict[str, np.ndarray]

    @property
    def embed_mlp(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [
            (self.tensors[f"embed.{i}.weight"], self.tensors[f"embed.{i}.bias"]) for i in (0, 1)
        ]

    @property
    def blocks(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [
            (self.tensors[f"blocks.{i}.weight"], self.tensors[f"blocks.{i}.bias"])
            for i in range(self.config.num_blocks)
        ]

    @property
    def headers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [
            (self.tensors[f"headers.{i}.weight"], self.tensors[f"headers.{i}.bias"])
            for i in range(self.config.num_blocks)
        ]

    def copy(self) -> ModelParams:
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()})


@dataclass(slots=True)
class MultiResOutput:
    frames: list[Tensor]

    @property
    def final(self) -> Tensor:
        return self.frames[-1]


@dataclass(slots=True)
class Video:
    """N x 3 x H x W frames in [0, 1].

    ``total_frames`` is the length of the source video when this is a prefix,
    so frame times stay anchored to the full sequence.
    """

    frames: np.ndarray
    id: str = "video"
    fps: float | None = None
    total_frames: int | None = None

    def __post_init__(self) -> None:
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 4 or frames.shape[0] < 1:
            raise EmptyVideoError(f"video {self.id!r} has no frames")
        if frames.shape[1] != 3:
            raise InvalidShapeError(f"video {self.id!r} frames must have 3 channels")
        self.frames = np.clip(frames, 0.0, 1.0)
        if self.total_frames is None:
            self.total_frames = frames.shape[0]

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def height(self) -> int:
        return int(self.frames.shape[2])

    @property
    def width(self) -> int:
        return int(self.frames.shape[3])

    @property
    def pixel_count(self) -> int:
        return self.n_frames * self.height * self.width

    def prefix(self, count: int) -> Video:
        return Video(self.frames[:count], id=self.id, fps=self.fps, total_frames=self.total_frames)


@dataclass(frozen=True, slots=True)
class SyntheticSpec:
    family: SyntheticFamily
    resolution: tuple[int, int] = (48, 40)
    n_frames: int = 8
    seed: int = 0
    velocity: float = 1.5
    size: float = 0.25
    contrast: float = 0.8

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["family"] = self.family.value
        data["resolution"] = list(self.resolution)
        return data


@dataclass(slots=True)
class MetaState:
    """Flat initial weights and learned inner learning rates with their optimizer moments."""

    theta0: np.ndarray
    beta: np.ndarray
    theta_opt: AdamState
    beta_opt: AdamState
    outer_iter: int = 0
    config: ModelConfig | None = None

    def copy(self) -> MetaState:
        return MetaState(
            theta0=self.theta0.copy(),
            beta=self.beta.copy(),
            theta_opt=self.theta_opt.copy(),
            beta_opt=self.beta_opt.copy(),
            outer_iter=self.outer_iter,
            config=self.config,
        )


@dataclass(slots=True)
class InnerResult:
    phi_m: np.ndarray
    losses: list[float]
    grads_outer: list[np.ndarray]
    grads_prev: list[np.ndarray]


@dataclass(frozen=True, slots=True)
class TrainLogRow:
    outer_iter: int
    task_id: str
    frames_used: int
    losses: tuple[float, ...]


@dataclass(slots=True)
class AdaptResult:
    params: np.ndarray
    psnr: list[float]
    ms_ssim: list[float]
    steps_to_target: int | None = None


@dataclass(slots=True)
class QuantizedTensor:
    q: np.ndarray
    scale: float
    zero_point: float


@dataclass(slots=True)
class CompressedModel:
    config: ModelConfig
    mask: np.ndarray
    q_bits: int
    scales: list[float]
    zero_points: list[float]
    counts: list[int]
    code_lengths: np.ndarray
    payload: bytes
    payload_bits: int
    checksum: int
