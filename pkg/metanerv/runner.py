from __future__ import annotations

import json
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from metanerv.checkpoint import fitted_state
from metanerv.compression import (
    bits_per_pixel,
    compress_model,
    decompress_model,
    encode_container,
    finetune_pruned,
    prune_global_magnitude,
    quantization_aware_finetune,
)
from metanerv.compression.pruning import prunable_positions
from metanerv.fitting import fit_video, reconstruct, video_psnr
from metanerv.losses import psnr
from metanerv.meta import MetaTrainResult, adapt, init_meta_state, meta_train
from metanerv.model import flatten_params, init_params
from metanerv.synthetic import add_noise, generate_synthetic
from metanerv.types.config import RunConfig
from metanerv.types.errors import ConfigurationError, StorageError, VideoNotFoundError
from metanerv.types.models import (
    AdaptResult,
    CompressedModel,
    MetaState,
    SyntheticSpec,
    TrainLogRow,
    Video,
    VideoFormat,
)
from metanerv.video_io import load_video, save_video

MANIFEST_NAME = "manifest.json"
SPLITS = ("train", "test")
_TEST_SEED_OFFSET = 5_000


@dataclass(slots=True)
class CompressionOutcome:
    compressed: CompressedModel
    psnr_before: float
    psnr_pruned: float
    psnr_after: float
    bpp: float
    container_bits: int


@dataclass(slots=True)
class DenoiseOutcome:
    psnr_noisy: float
    psnr_reconstruction: float
    psnr_fit_to_noisy: float
    params: np.ndarray


@dataclass(slots=True)
class MetaNeRVRunner:
    """Synchronous command workflows over the library operations."""

    config: RunConfig
    workers: int = 1

    def dataset_specs(self) -> dict[str, list[SyntheticSpec]]:
        ds = self.config.dataset
        base = ds.seed * 10_000
        counts = {"train": ds.train_videos, "test": ds.test_videos}
        offsets = {"train": 0, "test": _TEST_SEED_OFFSET}
        return {
            split: [
                SyntheticSpec(
                    family=ds.families[i % len(ds.families)],
                    resolution=(ds.height, ds.width),
                    n_frames=ds.frames,
                    seed=base + offsets[split] + i,
                )
                for i in range(counts[split])
            ]
            for split in SPLITS
        }

    def generate_dataset(self, out_dir: str | Path) -> dict[str, object]:
        """Write train/ and test/ videos plus a manifest with per-video seeds."""
        ds = self.config.dataset
        out_dir = Path(out_dir)
        suffix = ".mnvr" if ds.video_format is VideoFormat.RAW else ""
        manifest: dict[str, object] = {
            "format": ds.video_format.value,
            "noise_sigma": ds.noise_sigma,
        }
        for split, specs in self.dataset_specs().items():
            entries = []
            for spec in specs:
                video = generate_synthetic(spec)
                if ds.noise_sigma > 0:
                    video = add_noise(video, ds.noise_sigma, spec.seed)
                relative = f"{split}/{spec.family.value}-{spec.seed}{suffix}"
                save_video(video, out_dir / relative, ds.video_format)
                entries.append({"id": video.id, "path": relative, "spec": spec.to_dict()})
            manifest[split] = entries
        path = out_dir / MANIFEST_NAME
        try:
            path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        except OSError as exc:
            raise StorageError("cannot write manifest", str(path)) from exc
        return manifest

    def load_split(self, dataset_dir: str | Path, split: str) -> list[Video]:
        dataset_dir = Path(dataset_dir)
        path = dataset_dir / MANIFEST_NAME
        if not path.exists():
            raise VideoNotFoundError(f"no dataset manifest at {path}")
        try:
            manifest = json.loads(path.read_text())
        except (OSError, ValueError) as exc:
            raise StorageError("cannot read manifest", str(path)) from exc
        if split not in manifest:
            raise ConfigurationError(f"dataset has no {split!r} split")
        return [
            load_video(dataset_dir / entry["path"], video_id=entry["id"])
            for entry in manifest[split]
        ]

    def initial_weights(self) -> np.ndarray:
        return flatten_params(init_params(self.config.model, self.config.seed))

    def meta_train(
        self,
        dataset: list[Video],
        resume: MetaState | None = None,
        on_row: Callable[[TrainLogRow], None] | None = None,
    ) -> MetaTrainResult:
        cfg = self.config
        if resume is not None:
            self._check_model(resume)
        state = resume or init_meta_state(self.initial_weights(), cfg.meta, cfg.model)
        return meta_train(
            state.theta0, dataset, cfg.meta, state=state, on_step=on_row, workers=self.workers
        )

    def adapt(
        self,
        video: Video,
        state: MetaState | None,
        on_step: Callable[[int, float, float], None] | None = None,
    ) -> AdaptResult:
        """Meta state adapts with its learned step sizes; otherwise a seeded random init."""
        cfg = self.config
        if state is None:
            init, beta = self.initial_weights(), None
        else:
            self._check_model(state)
            init = state.theta0
            beta = state.beta if state.outer_iter > 0 else None
        return adapt(
            init,
            video,
            cfg.adapt.steps,
            cfg.model,
            cfg.loss,
            beta=beta,
            lr=cfg.adapt.random_lr,
            target_psnr=cfg.adapt.target_psnr,
            on_step=on_step,
        )

    def reconstruction(self, params: np.ndarray, video: Video) -> Video:
        frames = reconstruct(params, self.config.model, video)
        return Video(frames, id=f"{video.id}-reconstruction", fps=video.fps)

    def compress(self, state: MetaState, video: Video) -> CompressionOutcome:
        cfg = self.config
        self._check_model(state)
        comp = cfg.compression
        flat = state.theta0.copy()
        psnr_before = video_psnr(flat, cfg.model, video)
        mask = None
        psnr_pruned = psnr_before
        if comp.ratio > 0:
            flat, mask = prune_global_magnitude(
                state.theta0, comp.ratio, prunable_positions(cfg.model)
            )
            psnr_pruned = video_psnr(flat, cfg.model, video)
            flat = finetune_pruned(
                flat, mask, video, comp.finetune_steps, cfg.model, cfg.loss, comp.finetune_lr
            )
        if comp.qat_steps:
            flat = quantization_aware_finetune(
                flat,
                video,
                comp.qat_steps,
                comp.bits,
                cfg.model,
                cfg.loss,
                comp.finetune_lr,
                mask=mask,
            )
        compressed = compress_model(flat, cfg.model, comp.bits, mask)
        restored = decompress_model(compressed)
        bits = len(encode_container(compressed)) * 8
        return CompressionOutcome(
            compressed=compressed,
            psnr_before=psnr_before,
            psnr_pruned=psnr_pruned,
            psnr_after=video_psnr(restored, cfg.model, video),
            bpp=bits_per_pixel(bits, video),
            container_bits=bits,
        )

    def decompress(self, compressed: CompressedModel) -> MetaState:
        return fitted_state(
            decompress_model(compressed), compressed.config, self.config.adapt.random_lr
        )

    def fit(self, video: Video, state: MetaState | None = None) -> MetaState:
        """Full-precision fit of one video, starting from a checkpoint or the seeded init."""
        cfg = self.config
        init = self.initial_weights() if state is None else state.theta0
        if state is not None:
            self._check_model(state)
        fitted = fit_video(
            init, video, cfg.denoise.fit_steps, cfg.model, cfg.loss, cfg.denoise.fit_lr
        )
        return fitted_state(fitted.params, cfg.model, cfg.adapt.random_lr)

    def denoise_eval(self, clean: Video, state: MetaState | None = None) -> DenoiseOutcome:
        """Fit the noisy copy and score the reconstruction against the clean video."""
        cfg = self.config
        noisy = add_noise(clean, cfg.denoise.sigma, cfg.denoise.noise_seed)
        fitted = self.fit(noisy, state).theta0
        frames = reconstruct(fitted, cfg.model, clean)
        return DenoiseOutcome(
            psnr_noisy=psnr(noisy.frames, clean.frames),
            psnr_reconstruction=psnr(frames, clean.frames),
            psnr_fit_to_noisy=psnr(frames, noisy.frames),
            params=fitted,
        )

    def _check_model(self, state: MetaState) -> None:
        if state.config is not None and state.config != self.config.model:
            raise ConfigurationError("checkpoint model config differs from the run config")

    def score(self, state: MetaState, video: Video) -> float:
        return video_psnr(state.theta0, self.config.model, video)
