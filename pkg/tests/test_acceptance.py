"""Desk-scale experiments; the heavy ones are marked slow and skipped by default."""

from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from metanerv.checkpoint import encode_checkpoint
from metanerv.compression import (
    encode_container,
    entropy_decode,
    entropy_encode,
    finetune_pruned,
    prune_global_magnitude,
)
from metanerv.compression.pruning import prunable_positions
from metanerv.fitting import video_psnr
from metanerv.interface.reports import TrainLogWriter, write_adapt_csv
from metanerv.runner import MetaNeRVRunner
from metanerv.synthetic import generate_synthetic
from metanerv.types.config import (
    AdaptConfig,
    CompressionConfig,
    DatasetConfig,
    DenoiseConfig,
    RunConfig,
)
from metanerv.types.models import (
    LossConfig,
    MetaConfig,
    ModelConfig,
    SyntheticFamily,
    SyntheticSpec,
)

from helpers import constant_video

TINY_MODEL = ModelConfig(
    scale_factors=(2,), seed_h=2, seed_w=2, channels=(4, 4), pe_l=2, embed_dim=8, norm_dim=0
)
TINY_LOSS = LossConfig(ssim_window=3)


def _tiny_runner(**changes) -> MetaNeRVRunner:
    cfg = RunConfig(
        model=TINY_MODEL,
        meta=MetaConfig(inner_steps=2, outer_steps=3, outer_lr=1e-3, loss=TINY_LOSS),
        dataset=DatasetConfig(train_videos=3, test_videos=1, frames=2, height=4, width=4),
        compression=CompressionConfig(bits=8, ratio=0.2, finetune_steps=2),
        adapt=AdaptConfig(steps=2),
        denoise=DenoiseConfig(fit_steps=5, fit_lr=1e-2),
    )
    return MetaNeRVRunner(config=replace(cfg, **changes))


def _videos(runner: MetaNeRVRunner, split: str):
    return [generate_synthetic(spec) for spec in runner.dataset_specs()[split]]


def test_repeated_runs_are_byte_identical(tmp_path):
    outputs = []
    for attempt in range(2):
        out = tmp_path / f"run-{attempt}"
        runner = _tiny_runner()
        with TrainLogWriter(out / "train_log.csv", runner.config.meta.inner_steps) as log:
            state = runner.meta_train(_videos(runner, "train"), on_row=log.write).state
        video = _videos(runner, "test")[0]
        write_adapt_csv(out / "metrics.csv", runner.adapt(video, state))
        fitted = runner.fit(video, state)
        outcome = runner.compress(fitted, video)
        outputs.append(
            (
                encode_checkpoint(state),
                encode_container(outcome.compressed),
                (out / "train_log.csv").read_bytes(),
                (out / "metrics.csv").read_bytes(),
            )
        )
    assert outputs[0][2].count(b"\n") == 1 + runner.config.meta.outer_steps
    assert outputs[0] == outputs[1]


@pytest.mark.slow
def test_entropy_round_trip_on_many_streams():
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        alphabet = int(rng.integers(2, 65))
        symbols = rng.integers(0, alphabet, size=int(rng.integers(1, 60)))
        stream = entropy_encode(symbols, alphabet)
        decoded = entropy_decode(
            stream.payload, stream.payload_bits, stream.code_lengths, symbols.size
        )
        np.testing.assert_array_equal(decoded, symbols)


@pytest.fixture(scope="module")
def toy_fit():
    video = generate_synthetic(
        SyntheticSpec(SyntheticFamily.GRADIENT_PAN, resolution=(8, 8), n_frames=2, seed=7)
    )
    model = replace(TINY_MODEL, seed_h=4, seed_w=4)
    runner = MetaNeRVRunner(
        config=RunConfig(
            model=model,
            meta=MetaConfig(loss=TINY_LOSS),
            denoise=DenoiseConfig(fit_steps=200, fit_lr=1e-2),
            compression=CompressionConfig(bits=8, ratio=0.0),
        )
    )
    return runner, video, runner.fit(video)


@pytest.mark.slow
def test_eight_bit_compression_is_nearly_lossless(toy_fit):
    runner, video, fitted = toy_fit
    outcome = runner.compress(fitted, video)
    assert outcome.psnr_before - outcome.psnr_after <= 0.5
    assert outcome.bpp == len(encode_container(outcome.compressed)) * 8 / video.pixel_count


@pytest.mark.slow
def test_pruning_with_finetune_recovers(toy_fit):
    runner, video, fitted = toy_fit
    cfg = runner.config
    baseline = video_psnr(fitted.theta0, cfg.model, video)
    pruned, mask = prune_global_magnitude(fitted.theta0, 0.2, prunable_positions(cfg.model))
    tuned = finetune_pruned(pruned, mask, video, 30, cfg.model, cfg.loss, lr=1e-3)
    assert video_psnr(tuned, cfg.model, video) >= baseline - 1.0


@pytest.mark.slow
def test_fitting_a_noisy_video_denoises(toy_fit):
    runner, video, _ = toy_fit
    cfg = runner.config
    noisy_run = MetaNeRVRunner(config=replace(cfg, denoise=replace(cfg.denoise, sigma=0.1)))
    outcome = noisy_run.denoise_eval(video)
    assert outcome.psnr_reconstruction > outcome.psnr_noisy


@pytest.mark.slow
def test_more_bits_never_cost_quality(toy_fit):
    runner, video, fitted = toy_fit
    cfg = runner.config
    after = {
        bits: MetaNeRVRunner(config=replace(cfg, compression=replace(cfg.compression, bits=bits)))
        .compress(fitted, video)
        .psnr_after
        for bits in (4, 8)
    }
    assert after[8] >= after[4]


@pytest.fixture(scope="module")
def desk_meta():
    """Desk-scale meta-training with and without spatial guidance on one training split."""
    base = RunConfig(
        meta=MetaConfig(inner_steps=3, outer_steps=500),
        adapt=AdaptConfig(steps=3),
    )
    guided = MetaNeRVRunner(config=base)
    unguided = MetaNeRVRunner(
        config=replace(base, meta=replace(base.meta, loss=replace(base.loss, spatial=False)))
    )
    train = _videos(guided, "train")
    return guided, guided.meta_train(train).state, unguided, unguided.meta_train(train).state


@pytest.mark.slow
def test_meta_initialization_beats_random_and_spatial_guidance_helps(desk_meta):
    guided, guided_state, unguided, unguided_state = desk_meta
    held_out = _videos(guided, "test")

    meta = [guided.adapt(video, guided_state).psnr for video in held_out]
    random = [guided.adapt(video, None).psnr for video in held_out]
    ablated = [unguided.adapt(video, unguided_state).psnr for video in held_out]
    for step in (1, 3):
        gap = np.mean([m[step] for m in meta]) - np.mean([r[step] for r in random])
        assert gap >= 2.0
    guided_final = np.array([m[3] for m in meta])
    unguided_final = np.array([a[3] for a in ablated])
    assert guided_final.mean() >= unguided_final.mean() - 0.1
    assert np.count_nonzero(guided_final > unguided_final) >= 5


@pytest.mark.slow
def test_meta_initialization_fits_a_constant_frame(desk_meta):
    guided, state, _, _ = desk_meta
    cfg = guided.config
    runner = MetaNeRVRunner(config=replace(cfg, adapt=replace(cfg.adapt, steps=50)))
    frame = constant_video(0.5, 1, cfg.dataset.height, cfg.dataset.width)
    result = runner.adapt(frame, state)
    assert len(result.psnr) == 51
    assert result.psnr[-1] >= 40.0
