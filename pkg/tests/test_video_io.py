from __future__ import annotations

import numpy as np
import pytest
from PIL import Image

from metanerv.types.errors import (
    BadHeaderError,
    InvalidShapeError,
    MixedResolutionsError,
    StorageError,
    VideoNotFoundError,
)
from metanerv.types.models import Video, VideoFormat
from metanerv.video_io import RAW_HEADER, load_video, save_video


def _random_video(seed: int = 0) -> Video:
    values = np.random.default_rng(seed).random((3, 3, 6, 5)).astype(np.float32)
    return Video(values.astype(np.float64), id="clip")


def test_raw_round_trip_is_exact(tmp_path):
    video = _random_video()
    path = save_video(video, tmp_path / "clip.mnvr", VideoFormat.RAW)
    loaded = load_video(path)
    np.testing.assert_array_equal(loaded.frames, video.frames)
    assert loaded.id == "clip"
    assert path.stat().st_size == RAW_HEADER.size + video.frames.size * 4


def test_png_round_trip_within_one_level(tmp_path):
    video = _random_video(1)
    path = save_video(video, tmp_path / "frames")
    assert sorted(p.name for p in path.iterdir()) == ["000001.png", "000002.png", "000003.png"]
    loaded = load_video(path, video_id="frames")
    assert loaded.frames.shape == video.frames.shape
    assert np.abs(loaded.frames - video.frames).max() <= 1.0 / 255.0


def test_png_mixed_resolutions(tmp_path):
    Image.new("RGB", (5, 4)).save(tmp_path / "000001.png")
    Image.new("RGB", (6, 4)).save(tmp_path / "000002.png")
    with pytest.raises(MixedResolutionsError):
        load_video(tmp_path)


def test_grayscale_png_is_expanded(tmp_path):
    Image.new("L", (3, 2), color=51).save(tmp_path / "000001.png")
    video = load_video(tmp_path)
    assert video.frames.shape == (1, 3, 2, 3)
    np.testing.assert_allclose(video.frames, 0.2)


def test_missing_video(tmp_path):
    with pytest.raises(VideoNotFoundError):
        load_video(tmp_path / "nothing")
    with pytest.raises(VideoNotFoundError):
        load_video(tmp_path)


@pytest.mark.parametrize(
    "payload",
    [
        b"MNV",
        RAW_HEADER.pack(b"XXXX", 1, 2, 2) + bytes(48),
        RAW_HEADER.pack(b"MNVR", 1, 2, 2) + bytes(47),
        RAW_HEADER.pack(b"MNVR", 0, 2, 2),
    ],
    ids=["short", "magic", "length", "no-frames"],
)
def test_raw_bad_header(tmp_path, payload):
    path = tmp_path / "bad.mnvr"
    path.write_bytes(payload)
    with pytest.raises(BadHeaderError):
        load_video(path)


def test_video_requires_three_channels():
    with pytest.raises(InvalidShapeError):
        Video(np.zeros((2, 1, 4, 4)))


def test_unreadable_raw_file_is_a_storage_error(tmp_path, monkeypatch):
    path = save_video(_random_video(), tmp_path / "clip.mnvr", VideoFormat.RAW)

    def _denied(self):
        raise PermissionError(13, "Permission denied")

    monkeypatch.setattr(type(path), "read_bytes", _denied)
    with pytest.raises(StorageError) as excinfo:
        load_video(path)
    assert excinfo.value.path == str(path)
