"""Voice-activity segments and the speech-frame excision map.

Non-speech frames are removed before windowed decoding; the excision map
records, for each kept (speech) frame, its original frame index so decoded
positions can be mapped back to episode time.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .transcript import TimeSpan


@dataclass(frozen=True)
class VadSegment:
    span: TimeSpan


def validate_segments(segments: list[VadSegment]) -> list[VadSegment]:
    prev_end = None
    for i, seg in enumerate(segments):
        if prev_end is not None and seg.span.start < prev_end:
            raise ValidationError(
                f"VAD segment {i} starting at {seg.span.start} overlaps or precedes "
                f"previous end {prev_end}"
            )
        prev_end = seg.span.end
    return segments


def parse_vad_segments(path: str | os.PathLike) -> list[VadSegment]:
    """Parse line-delimited ``start end`` second pairs."""
    segments = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) != 2:
            raise ParseError(f"expected 'start end', got {stripped!r}", lineno)
        try:
            start, end = float(parts[0]), float(parts[1])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from exc
        segments.append(VadSegment(TimeSpan(start, end)))
    return validate_segments(segments)


def speech_frame_map(
    segments: list[VadSegment] | None, total_frames: int, frame_rate: float
) -> np.ndarray:
    """Original indices of frames whose start time falls inside a segment.

    With ``segments`` None the identity map comes back: nothing is excised.
    """
    if segments is None:
        return np.arange(total_frames, dtype=np.int64)
    validate_segments(segments)
    mask = np.zeros(total_frames, dtype=bool)
    for seg in segments:
        lo = int(np.ceil(seg.span.start * frame_rate - 1e-9))
        hi = int(np.ceil(seg.span.end * frame_rate - 1e-9))
        mask[max(lo, 0) : min(hi, total_frames)] = True
    return np.nonzero(mask)[0].astype(np.int64)


def inverse_frame_map(keep: np.ndarray, total_frames: int) -> np.ndarray:
    """Original frame index -> speech index, or -1 for excised frames."""
    inverse = np.full(total_frames, -1, dtype=np.int64)
    inverse[keep] = np.arange(len(keep), dtype=np.int64)
    return inverse
