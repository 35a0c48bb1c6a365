"""Run-level settings assembled by the config loader and consumed by the command workflows."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from metanerv.types.models import LossConfig, MetaConfig, ModelConfig, SyntheticFamily, VideoFormat

DEFAULT_FAMILIES = (SyntheticFamily.BOUNCING_BALL,)


@dataclass(frozen=True, slots=True)
class DatasetConfig:
    families: tuple[SyntheticFamily, ...] = DEFAULT_FAMILIES
    train_videos: int = 24
    test_videos: int = 8
    frames: int = 8
    height: int = 48
    width: int = 40
    seed: int = 0
    video_format: VideoFormat = VideoFormat.PNG
    noise_sigma: float = 0.0


@dataclass(frozen=True, slots=True)
class CompressionConfig:
    bits: int = 8
    ratio: float = 0.0
    finetune_steps: int = 30
    finetune_lr: float = 1e-3
    qat_steps: int = 0


@dataclass(frozen=True, slots=True)
class AdaptConfig:
    steps: int = 3
    random_lr: float = 1e-3
    target_psnr: float | None = None
    dump_frames: bool = False


@dataclass(frozen=True, slots=True)
class DenoiseConfig:
    sigma: float = 0.1
    noise_seed: int = 0
    fit_steps: int = 200
    fit_lr: float = 1e-3


@dataclass(frozen=True, slots=True)
class ConfigOverrides:
    """Values given as command-line flags; ``None`` keeps the file value."""

    seed: int | None = None
    spatial: bool | None = None
    progressive: bool | None = None
    outer_steps: int | None = None
    adapt_steps: int | None = None
    fit_steps: int | None = None
    ratio: float | None = None
    bits: int | None = None

    def to_dict(self) -> dict[str, object]:
        return {
            item.name: getattr(self, item.name)
            for item in fields(self)
            if getattr(self, item.name) is not None
        }


@dataclass(frozen=True, slots=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    meta: MetaConfig = field(default_factory=MetaConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    compression: CompressionConfig = field(default_factory=CompressionConfig)
    adapt: AdaptConfig = field(default_factory=AdaptConfig)
    denoise: DenoiseConfig = field(default_factory=DenoiseConfig)
    seed: int = 0
    source_text: str = ""
    overrides: ConfigOverrides = field(default_factory=ConfigOverrides)

    @property
    def loss(self) -> LossConfig:
        return self.meta.loss

