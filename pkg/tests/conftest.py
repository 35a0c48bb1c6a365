from __future__ import annotations

import pytest

from metanerv.types.models import LossConfig, ModelConfig


@pytest.fixture
def tiny_model() -> ModelConfig:
    """2x2 seed map, one x2 block: renders 4x4 frames with 887 parameters."""
    return ModelConfig(
        scale_factors=(2,),
        seed_h=2,
        seed_w=2,
        channels=(4, 4),
        pe_l=2,
        embed_dim=8,
        norm_dim=0,
    )


@pytest.fixture
def small_model() -> ModelConfig:
    """Two blocks rendering 12x12 frames, with the time-conditioned affine branch."""
    return ModelConfig(
        scale_factors=(2, 2),
        seed_h=3,
        seed_w=3,
        channels=(6, 6, 4),
        pe_l=4,
        embed_dim=16,
        norm_dim=8,
    )


@pytest.fixture
def tiny_loss() -> LossConfig:
    return LossConfig(ssim_window=3)

