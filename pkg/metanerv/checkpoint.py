"""MNRV1 checkpoint container for meta states and fitted generators."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from metanerv.model import flatten_params, parameter_count
from metanerv.types.errors import (
    BadMagicError,
    LengthMismatchError,
    StorageError,
    VersionUnsupportedError,
)
from metanerv.types.models import AdamState, MetaState, ModelConfig, ModelParams

MAGIC = b"MNRV1"
VERSION = 1

_PREFIX = struct.Struct("<5sHI")
_U64 = struct.Struct("<Q")


def fitted_state(
    params: ModelParams | np.ndarray, cfg: ModelConfig, beta: float = 0.0
) -> MetaState:
    """Wrap plain fitted weights as a checkpointable state with fresh moments."""
    flat = flatten_params(params) if isinstance(params, ModelParams) else np.asarray(params)
    return MetaState(
        theta0=flat.astype(np.float64),
        beta=np.full(flat.size, beta),
        theta_opt=AdamState.zeros(flat.size),
        beta_opt=AdamState.zeros(flat.size),
        outer_iter=0,
        config=cfg,
    )


def _pack_moments(state: AdamState) -> bytes:
    return (
        _U64.pack(state.step)
        + state.m.astype("<f8").tobytes()
        + state.v.astype("<f8").tobytes()
    )


def encode_checkpoint(state: MetaState) -> bytes:
    if state.config is None:
        raise StorageError("a checkpoint needs the model config")
    size = state.theta0.size
    if state.beta.size != size or size != parameter_count(state.config):
        raise LengthMismatchError(
            f"theta0 has {size} entries, beta {state.beta.size}, "
            f"config expects {parameter_count(state.config)}"
        )
    config_json = json.dumps(state.config.to_dict(), sort_keys=True).encode("utf-8")
    return b"".join(
        [
            _PREFIX.pack(MAGIC, VERSION, len(config_json)),
            config_json,
            _U64.pack(state.outer_iter),
            _U64.pack(size),
            state.theta0.astype("<f8").tobytes(),
            state.beta.astype("<f8").tobytes(),
            _pack_moments(state.theta_opt),
            _pack_moments(state.beta_opt),
        ]
    )


def decode_checkpoint(data: bytes) -> MetaState:
    if data[: len(MAGIC)] != MAGIC:
        raise BadMagicError(f"checkpoint does not start with {MAGIC!r}")
    try:
        _, version, config_len = _PREFIX.unpack_from(data)
        if version != VERSION:
            raise VersionUnsupportedError(f"checkpoint version {version} is not supported")
        offset = _PREFIX.size
        config = ModelConfig.from_dict(json.loads(data[offset : offset + config_len]))
        offset += config_len
        (outer_iter,) = _U64.unpack_from(data, offset)
        (size,) = _U64.unpack_from(data, offset + 8)
        offset += 16

        def vector() -> np.ndarray:
            nonlocal offset
            values = np.frombuffer(data, dtype="<f8", count=size, offset=offset)
            offset += 8 * size
            return values.astype(np.float64)

        def moments() -> AdamState:
            nonlocal offset
            (step,) = _U64.unpack_from(data, offset)
            offset += 8
            return AdamState(m=vector(), v=vector(), step=step)

        theta0, beta = vector(), vector()
        theta_opt, beta_opt = moments(), moments()
    except (struct.error, ValueError, KeyError) as exc:
        raise StorageError("checkpoint is truncated or malformed") from exc
    if offset != len(data):
        raise StorageError("checkpoint has trailing bytes")
    if size != parameter_count(config):
        raise LengthMismatchError(
            f"checkpoint holds {size} parameters, config expects {parameter_count(config)}"
        )
    return MetaState(theta0, beta, theta_opt, beta_opt, outer_iter, config)


def save_checkpoint(state: MetaState, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_checkpoint(state))
    except OSError as exc:
        raise StorageError("cannot write checkpoint", str(path)) from exc
    return path


def load_checkpoint(path: str | Path) -> MetaState:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise StorageError("cannot read checkpoint", str(path)) from exc
    return decode_checkpoint(data)
