from __future__ import annotations

import math
import os
from collections.abc import Callable, Mapping
from dataclasses import replace
from pathlib import Path
from typing import TypeVar

from dotenv import dotenv_values, load_dotenv

from metanerv.types.config import (
    DEFAULT_FAMILIES,
    AdaptConfig,
    CompressionConfig,
    ConfigOverrides,
    DatasetConfig,
    DenoiseConfig,
    RunConfig,
)
from metanerv.types.errors import ConfigurationError, StorageError
from metanerv.types.models import (
    LossConfig,
    MetaConfig,
    ModelConfig,
    SyntheticFamily,
    TimeNorm,
    VideoFormat,
)

PREFIX = "METANERV_"
T = TypeVar("T")


KNOWN_KEYS = frozenset(
    PREFIX + key
    for key in (
        "SEED",
        "SCALES",
        "SEED_H",
        "SEED_W",
        "CHANNELS",
        "PE_B",
        "PE_L",
        "EMBED_DIM",
        "NORM_DIM",
        "T_NORM",
        "ALPHA",
        "HEAD_WEIGHTS",
        "SSIM_WINDOW",
        "SPATIAL",
        "INNER_STEPS",
        "OUTER_STEPS",
        "OUTER_LR",
        "BETA_INIT",
        "PROGRESSIVE",
        "PROGRESSIVE_RATE",
        "TASKS_PER_STEP",
        "FAMILY",
        "TRAIN_VIDEOS",
        "TEST_VIDEOS",
        "FRAMES",
        "HEIGHT",
        "WIDTH",
        "VIDEO_FORMAT",
        "NOISE_SIGMA",
        "BITS",
        "RATIO",
        "FINETUNE_STEPS",
        "FINETUNE_LR",
        "QAT_STEPS",
        "ADAPT_STEPS",
        "RANDOM_LR",
        "TARGET_PSNR",
        "DUMP_FRAMES",
        "SIGMA",
        "NOISE_SEED",
        "FIT_STEPS",
        "FIT_LR",
        "THREADS",
    )
)


class _Values:
    """Typed access to raw ``METANERV_*`` strings, naming the key on failure."""

    def __init__(self, raw: Mapping[str, str | None]) -> None:
        self._raw = raw

    def _get(self, key: str, default: T, parse: Callable[[str], T], kind: str) -> T:
        name = PREFIX + key
        value = (self._raw.get(name) or "").strip()
        if not value:
            return default
        try:
            return parse(value)
        except ValueError as exc:
            raise ConfigurationError(f"{name} must be {kind}, got {value!r}") from exc

    def integer(self, key: str, default: int, minimum: int | None = None) -> int:
        value = self._get(key, default, int, "an integer")
        if minimum is not None and value < minimum:
            raise ConfigurationError(f"{PREFIX}{key} must be >= {minimum}")
        return value

    def number(self, key: str, default: float, minimum: float | None = None) -> float:
        value = self._get(key, default, float, "a number")
        if not math.isfinite(value):
            raise ConfigurationError(f"{PREFIX}{key} must be finite")
        if minimum is not None and value < minimum:
            raise ConfigurationError(f"{PREFIX}{key} must be >= {minimum}")
        return value

    def optional_number(self, key: str) -> float | None:
        return self._get(key, None, float, "a number")

    def flag(self, key: str, default: bool) -> bool:
        return self._get(key, default, _parse_bool, "true or false")

    def ints(self, key: str, default: tuple[int, ...]) -> tuple[int, ...]:
        return self._get(key, default, _parse_list(int), "a comma-separated list of integers")

    def floats(self, key: str, default: tuple[float, ...] | None) -> tuple[float, ...] | None:
        return self._get(key, default, _parse_list(float), "a comma-separated list of numbers")

    def choice(self, key: str, default: T, enum: Callable[[str], T]) -> T:
        return self._get(key, default, enum, "one of the documented values")

    def families(
        self, key: str, default: tuple[SyntheticFamily, ...]
    ) -> tuple[SyntheticFamily, ...]:
        return self._get(key, default, _families, "a comma-separated list of synthetic families")


def _parse_bool(value: str) -> bool:
    lowered = value.lower()
    if lowered in {"1", "true", "yes", "on"}:
        return True
    if lowered in {"0", "false", "no", "off"}:
        return False
    raise ValueError(value)


def _parse_list(item: Callable[[str], T]) -> Callable[[str], tuple[T, ...]]:
    def parse(value: str) -> tuple[T, ...]:
        return tuple(item(part.strip()) for part in value.split(",") if part.strip())

    return parse


def _pick(override: T | None, value: T) -> T:
    return value if override is None else override


def _families(value: str) -> tuple[SyntheticFamily, ...]:
    out = _parse_list(SyntheticFamily)(value)
    if not out:
        raise ValueError(value)
    return out


def _build(values: _Values, overrides: ConfigOverrides) -> RunConfig:
    seed = _pick(overrides.seed, values.integer("SEED", 0, minimum=0))
    if seed < 0:
        raise ConfigurationError("seed must be >= 0")

    defaults = ModelConfig()
    try:
        model = ModelConfig(
            scale_factors=values.ints("SCALES", defaults.scale_factors),
            seed_h=values.integer("SEED_H", defaults.seed_h),
            seed_w=values.integer("SEED_W", defaults.seed_w),
            channels=values.ints("CHANNELS", defaults.channels),
            pe_b=values.number("PE_B", defaults.pe_b),
            pe_l=values.integer("PE_L", defaults.pe_l),
            embed_dim=values.integer("EMBED_DIM", defaults.embed_dim),
            norm_dim=values.integer("NORM_DIM", defaults.norm_dim),
            t_norm=values.choice("T_NORM", defaults.t_norm, TimeNorm),
        )
        loss = LossConfig(
            alpha=values.number("ALPHA", 0.7),
            head_weights=values.floats("HEAD_WEIGHTS", None),
            ssim_window=values.integer("SSIM_WINDOW", 7),
            spatial=_pick(overrides.spatial, values.flag("SPATIAL", True)),
        )
        meta = MetaConfig(
            inner_steps=values.integer("INNER_STEPS", 3),
            outer_steps=_pick(overrides.outer_steps, values.integer("OUTER_STEPS", 500)),
            outer_lr=values.number("OUTER_LR", 1e-4),
            beta_init=values.number("BETA_INIT", 1e-2),
            progressive=_pick(overrides.progressive, values.flag("PROGRESSIVE", True)),
            progressive_rate=values.number("PROGRESSIVE_RATE", 1.0),
            tasks_per_step=values.integer("TASKS_PER_STEP", 1),
            loss=loss,
            seed=seed,
        )
    except ConfigurationError as exc:
        raise ConfigurationError(f"invalid model or training settings: {exc}") from exc

    dataset = DatasetConfig(
        families=values.families("FAMILY", DEFAULT_FAMILIES),
        train_videos=values.integer("TRAIN_VIDEOS", 24, minimum=1),
        test_videos=values.integer("TEST_VIDEOS", 8, minimum=0),
        frames=values.integer("FRAMES", 8, minimum=1),
        height=values.integer("HEIGHT", 48, minimum=1),
        width=values.integer("WIDTH", 40, minimum=1),
        seed=seed,
        video_format=values.choice("VIDEO_FORMAT", VideoFormat.PNG, VideoFormat),
        noise_sigma=values.number("NOISE_SIGMA", 0.0, minimum=0.0),
    )
    if (dataset.height, dataset.width) != model.output_resolution:
        raise ConfigurationError(
            f"{PREFIX}HEIGHT x {PREFIX}WIDTH is {dataset.height}x{dataset.width} but the seed map "
            f"and scales render {model.output_resolution[0]}x{model.output_resolution[1]}"
        )

    compression = CompressionConfig(
        bits=_pick(overrides.bits, values.integer("BITS", 8)),
        ratio=_pick(overrides.ratio, values.number("RATIO", 0.0, minimum=0.0)),
        finetune_steps=values.integer("FINETUNE_STEPS", 30, minimum=0),
        finetune_lr=values.number("FINETUNE_LR", 1e-3, minimum=0.0),
        qat_steps=values.integer("QAT_STEPS", 0, minimum=0),
    )
    if not 2 <= compression.bits <= 16:
        raise ConfigurationError(f"{PREFIX}BITS must be within [2, 16]")
    if not 0.0 <= compression.ratio < 1.0:
        raise ConfigurationError(f"{PREFIX}RATIO must be within [0, 1)")

    adapt = AdaptConfig(
        steps=_pick(overrides.adapt_steps, values.integer("ADAPT_STEPS", 3, minimum=0)),
        random_lr=values.number("RANDOM_LR", 1e-3, minimum=0.0),
        target_psnr=values.optional_number("TARGET_PSNR"),
        dump_frames=values.flag("DUMP_FRAMES", False),
    )
    denoise = DenoiseConfig(
        sigma=values.number("SIGMA", 0.1, minimum=0.0),
        noise_seed=values.integer("NOISE_SEED", seed, minimum=0),
        fit_steps=_pick(overrides.fit_steps, values.integer("FIT_STEPS", 200, minimum=0)),
        fit_lr=values.number("FIT_LR", 1e-3, minimum=0.0),
    )
    return RunConfig(
        model=model,
        meta=meta,
        dataset=dataset,
        compression=compression,
        adapt=adapt,
        denoise=denoise,
        seed=seed,
        overrides=overrides,
    )


def load_run_config(
    path: str | Path | None = None, overrides: ConfigOverrides | None = None
) -> RunConfig:
    """Read a ``KEY=VALUE`` run file without exporting it into the process environment."""
    overrides = overrides or ConfigOverrides()
    if path is None:
        return replace(_build(_Values({}), overrides), source_text="")
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise StorageError("cannot read config", str(path)) from exc
    raw = dotenv_values(path)
    unknown = sorted(key for key in raw if key not in KNOWN_KEYS)
    if unknown:
        raise ConfigurationError(f"Unknown config keys: {', '.join(unknown)}")
    return replace(_build(_Values(raw), overrides), source_text=text)


def load_thread_cap() -> int:
    """Worker cap from METANERV_THREADS in the environment or ``.env``."""
    load_dotenv()
    raw = os.getenv("METANERV_THREADS", "1").strip() or "1"
    try:
        threads = int(raw)
    except ValueError as exc:
        raise ConfigurationError("METANERV_THREADS must be a positive integer") from exc
    if threads < 1:
        raise ConfigurationError("METANERV_THREADS must be > 0")
    return threads
