from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from metanerv.types.errors import (
    BadHeaderError,
    MixedResolutionsError,
    StorageError,
    VideoNotFoundError,
)
from metanerv.types.models import Video, VideoFormat

RAW_MAGIC = b"MNVR"
RAW_HEADER = struct.Struct("<4sIII")


def load_video(path: str | Path, video_id: str | None = None) -> Video:
    """Read a directory of numbered PNG frames or a single MNVR raw file."""
    path = Path(path)
    if not path.exists():
        raise VideoNotFoundError(f"video not found: {path}")
    vid = video_id or path.stem
    if path.is_dir():
        return _load_png_dir(path, vid)
    return _load_raw(path, vid)


def save_video(video: Video, path: str | Path, fmt: VideoFormat = VideoFormat.PNG) -> Path:
    path = Path(path)
    try:
        if fmt is VideoFormat.RAW:
            path.parent.mkdir(parents=True, exist_ok=True)
            header = RAW_HEADER.pack(RAW_MAGIC, video.n_frames, video.height, video.width)
            path.write_bytes(header + video.frames.astype("<f4").tobytes())
        else:
            path.mkdir(parents=True, exist_ok=True)
            for index, frame in enumerate(video.frames, start=1):
                pixels = np.round(frame.transpose(1, 2, 0) * 255.0).clip(0, 255).astype(np.uint8)
                Image.fromarray(pixels).save(path / f"{index:06d}.png")
    except OSError as exc:
        raise StorageError("cannot write video", str(path)) from exc
    return path


def _load_png_dir(path: Path, video_id: str) -> Video:
    files = sorted(path.glob("*.png"))
    if not files:
        raise VideoNotFoundError(f"no PNG frames in {path}")
    frames: list[np.ndarray] = []
    for file in files:
        try:
            with Image.open(file) as image:
                pixels = np.asarray(image.convert("RGB"), dtype=np.float64) / 255.0
        except (OSError, UnidentifiedImageError) as exc:
            raise StorageError("cannot read frame", str(file)) from exc
        frame = pixels.transpose(2, 0, 1)
        if frames and frame.shape != frames[0].shape:
            raise MixedResolutionsError(
                f"{file.name} is {frame.shape[1]}x{frame.shape[2]}, "
                f"expected {frames[0].shape[1]}x{frames[0].shape[2]}"
            )
        frames.append(frame)
    return Video(np.stack(frames), id=video_id)


def _load_raw(path: Path, video_id: str) -> Video:
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise StorageError("cannot read video", str(path)) from exc
    if len(data) < RAW_HEADER.size:
        raise BadHeaderError(f"{path} is too short for an MNVR header")
    magic, n, h, w = RAW_HEADER.unpack_from(data)
    if magic != RAW_MAGIC:
        raise BadHeaderError(f"{path} does not start with {RAW_MAGIC!r}")
    expected = RAW_HEADER.size + n * 3 * h * w * 4
    if n < 1 or len(data) != expected:
        raise BadHeaderError(f"{path} header promises {n}x3x{h}x{w} but holds {len(data)} bytes")
    planes = np.frombuffer(data, dtype="<f4", offset=RAW_HEADER.size).reshape(n, 3, h, w)
    return Video(planes.astype(np.float64), id=video_id)
