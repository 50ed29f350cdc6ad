"""Feature-matrix files: a self-describing binary format plus a text twin.

Binary layout (little-endian): 8-byte magic ``CSFEAT01``, uint32 frame
count, uint32 feature dimension, float64 frame rate, then float32 frame
rows. The text format mirrors it for hand-written test fixtures: a header
line ``n_frames dim frame_rate`` followed by one whitespace-separated row
per frame. :func:`read_features` sniffs the magic to dispatch.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .errors import ParseError

MAGIC = b"CSFEAT01"
_HEADER = struct.Struct("<II d")


def write_features(path: str | os.PathLike, frames: np.ndarray, frame_rate: float) -> None:
    frames = np.ascontiguousarray(frames, dtype=np.float32)
    if frames.ndim != 2:
        raise ParseError(f"feature matrix must be 2-D, got shape {frames.shape}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(frames.shape[0], frames.shape[1], float(frame_rate)))
        fh.write(frames.tobytes())


def write_features_text(path: str | os.PathLike, frames: np.ndarray, frame_rate: float) -> None:
    frames = np.asarray(frames, dtype=np.float64)
    lines = [f"{frames.shape[0]} {frames.shape[1]} {float(frame_rate)!r}"]
    lines.extend(" ".join(repr(float(v)) for v in row) for row in frames)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_features(path: str | os.PathLike) -> tuple[np.ndarray, float]:
    """Load a feature matrix; returns (frames, frame_rate)."""
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
        if head == MAGIC:
            raw = fh.read(_HEADER.size)
            if len(raw) != _HEADER.size:
                raise ParseError(f"{path}: truncated feature header")
            n_frames, dim, frame_rate = _HEADER.unpack(raw)
            data = np.frombuffer(fh.read(), dtype=np.float32)
            if data.size != n_frames * dim:
                raise ParseError(
                    f"{path}: expected {n_frames * dim} values, found {data.size}"
                )
            return data.reshape(n_frames, dim).astype(np.float64), frame_rate
    return _read_features_text(path)


def _read_features_text(path: str | os.PathLike) -> tuple[np.ndarray, float]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ParseError(f"{path}: empty feature file", 1)
    header = lines[0].split()
    if len(header) != 3:
        raise ParseError(f"{path}: header must be 'n_frames dim frame_rate'", 1)
    try:
        n_frames, dim, frame_rate = int(header[0]), int(header[1]), float(header[2])
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}", 1) from exc
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        values = line.split()
        if len(values) != dim:
            raise ParseError(f"{path}: expected {dim} values, found {len(values)}", lineno)
        try:
            rows.append([float(v) for v in values])
        except ValueError as exc:
            raise ParseError(f"{path}: {exc}", lineno) from exc
    if len(rows) != n_frames:
        raise ParseError(f"{path}: header promises {n_frames} frames, found {len(rows)}")
    frames = np.asarray(rows, dtype=np.float64)
    if frames.size == 0:
        frames = frames.reshape(n_frames, dim)
    return frames, frame_rate
