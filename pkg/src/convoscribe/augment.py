"""Training-example builders that sample audio spans and truncate targets.

Span sampling draws 10-30 second segments uniformly from an episode. The
shift builder keeps a word count proportional to how much of each utterance
the span covers (exact rational arithmetic, round half up), keeping the tail
of utterances cut at the span's left edge and the head of those cut at the
right edge. The alignment-guided builder instead keeps exactly the words
whose forced-alignment span lies wholly inside the sampled span.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import DataError, ParseError, ValidationError
from .transcript import US_TOKEN, Conversation, TimeSpan, Utterance, speaker_token

MIN_SPAN_SECONDS = 10.0
MAX_SPAN_SECONDS = 30.0


@dataclass(frozen=True)
class SegmentSpan:
    span: TimeSpan

    def __post_init__(self):
        duration = self.span.duration
        if not MIN_SPAN_SECONDS <= duration <= MAX_SPAN_SECONDS:
            raise ValidationError(
                f"segment duration {duration} outside [{MIN_SPAN_SECONDS}, {MAX_SPAN_SECONDS}]"
            )


@dataclass(frozen=True)
class WordAlignmentTrack:
    """Per-utterance forced word alignments."""

    spans: dict[int, tuple[TimeSpan, ...]]

    def __post_init__(self):
        object.__setattr__(
            self, "spans", {int(k): tuple(v) for k, v in self.spans.items()}
        )

    def validate_against(self, conversation: Conversation) -> None:
        for utt_idx, word_spans in self.spans.items():
            if utt_idx >= len(conversation.utterances):
                raise DataError(f"alignment track names utterance {utt_idx}, which does not exist")
            utterance = conversation.utterances[utt_idx]
            if len(word_spans) != len(utterance.words):
                raise DataError(
                    f"utterance {utt_idx}: {len(word_spans)} aligned spans for "
                    f"{len(utterance.words)} words"
                )
            prev_start = None
            for w, span in enumerate(word_spans):
                if not utterance.span.contains(span):
                    raise DataError(
                        f"utterance {utt_idx} word {w}: aligned span {span} outside utterance"
                    )
                if prev_start is not None and span.start < prev_start:
                    raise DataError(f"utterance {utt_idx} word {w}: aligned starts decrease")
                prev_start = span.start


@dataclass(frozen=True)
class TrainingExample:
    conversation_id: str
    audio_span: SegmentSpan
    target: tuple[str, ...]
    provenance: tuple[tuple[int, int, int], ...]

    def to_record(self) -> dict:
        return {
            "conversation_id": self.conversation_id,
            "span": {"start": self.audio_span.span.start, "end": self.audio_span.span.end},
            "target": list(self.target),
            "provenance": [list(p) for p in self.provenance],
        }


def parse_alignment_track(path: str | os.PathLike) -> WordAlignmentTrack:
    """Parse line-delimited ``utteranceIdx wordIdx start end`` records."""
    rows: dict[int, dict[int, TimeSpan]] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) != 4:
            raise ParseError(f"expected 'utteranceIdx wordIdx start end', got {stripped!r}", lineno)
        try:
            utt_idx, word_idx = int(parts[0]), int(parts[1])
            span = TimeSpan(float(parts[2]), float(parts[3]))
        except (ValueError, ValidationError) as exc:
            raise ParseError(str(exc), lineno) from exc
        rows.setdefault(utt_idx, {})[word_idx] = span
    spans = {}
    for utt_idx, by_word in rows.items():
        if sorted(by_word) != list(range(len(by_word))):
            raise ParseError(f"utterance {utt_idx}: word indices are not contiguous from 0")
        spans[utt_idx] = tuple(by_word[w] for w in range(len(by_word)))
    return WordAlignmentTrack(spans)


def sample_spans(conversation: Conversation, count: int, seed) -> list[SegmentSpan]:
    """Deterministically sample audio spans with uniform start and duration.

    ``seed`` is anything :func:`numpy.random.default_rng` accepts.
    """
    duration = conversation.duration
    if duration <= MAX_SPAN_SECONDS:
        raise ValidationError(
            f"episode lasts {duration}s; sampling needs more than {MAX_SPAN_SECONDS}s"
        )
    rng = np.random.default_rng(seed)
    spans = []
    for _ in range(count):
        length = rng.uniform(MIN_SPAN_SECONDS, MAX_SPAN_SECONDS)
        start = rng.uniform(0.0, duration - length)
        spans.append(SegmentSpan(TimeSpan(start, start + length)))
    return spans


def _round_half_up(value: Fraction) -> int:
    return int(value + Fraction(1, 2))


def _kept_range(utterance: Utterance, span: TimeSpan) -> tuple[int, int] | None:
    """Word index range an audio span keeps, or None when nothing survives.

    Fully contained utterances keep everything. Partially covered ones keep
    round(f*n) words where f is the covered fraction of the utterance: the
    last words when the span clips the utterance's head, the first words when
    it clips the tail, and a proportionally placed middle run when the span
    sits strictly inside the utterance.
    """
    n = len(utterance.words)
    if n == 0:
        return None
    us, ue = Fraction(utterance.span.start), Fraction(utterance.span.end)
    s, e = Fraction(span.start), Fraction(span.end)
    if s <= us and ue <= e:
        return 0, n
    lo, hi = max(us, s), min(ue, e)
    if hi <= lo:
        return None
    fraction = (hi - lo) / (ue - us)
    kept = _round_half_up(fraction * n)
    if kept == 0:
        return None
    if us < s and ue <= e:
        return n - kept, n
    if s <= us and e < ue:
        return 0, kept
    offset = min(_round_half_up((lo - us) / (ue - us) * n), n - kept)
    return offset, offset + kept


def _assemble(
    conversation: Conversation,
    span: SegmentSpan,
    kept_per_utterance: list[tuple[int, list[tuple[int, int]]]],
) -> TrainingExample:
    """Serialize kept word ranges into the speaker-token/[US] target format."""
    target: list[str] = []
    provenance: list[tuple[int, int, int]] = []
    for utt_idx, ranges in kept_per_utterance:
        utterance = conversation.utterances[utt_idx]
        for lo, hi in ranges:
            target.extend(w.text for w in utterance.words[lo:hi])
            provenance.append((utt_idx, lo, hi))
        target.append(speaker_token(utterance.speaker))
        target.append(US_TOKEN)
    return TrainingExample(conversation.id, span, tuple(target), tuple(provenance))


def shift_aug(conversation: Conversation, span: SegmentSpan) -> TrainingExample:
    """Training example with proportionally truncated utterance text."""
    kept = []
    for utt_idx, utterance in enumerate(conversation.utterances):
        window = _kept_range(utterance, span.span)
        if window is not None:
            kept.append((utt_idx, [window]))
    return _assemble(conversation, span, kept)


def _intersects(utterance: Utterance, span: TimeSpan) -> bool:
    return utterance.span.intersection(span) > 0 or span.contains(utterance.span)


def align_aug(
    conversation: Conversation, span: SegmentSpan, track: WordAlignmentTrack
) -> TrainingExample:
    """Training example keeping only words fully inside the span per the track."""
    kept = []
    for utt_idx, utterance in enumerate(conversation.utterances):
        if not _intersects(utterance, span.span):
            continue
        if utt_idx not in track.spans:
            raise DataError(
                f"utterance {utt_idx} intersects the sampled span but has no alignment"
            )
        word_spans = track.spans[utt_idx]
        if len(word_spans) != len(utterance.words):
            raise DataError(
                f"utterance {utt_idx}: {len(word_spans)} aligned spans for "
                f"{len(utterance.words)} words"
            )
        inside = [w for w, ws in enumerate(word_spans) if span.span.contains(ws)]
        runs = _contiguous_runs(inside)
        if runs:
            kept.append((utt_idx, runs))
    return _assemble(conversation, span, kept)


def _contiguous_runs(indices: list[int]) -> list[tuple[int, int]]:
    runs: list[tuple[int, int]] = []
    for idx in indices:
        if runs and idx == runs[-1][1]:
            runs[-1] = (runs[-1][0], idx + 1)
        else:
            runs.append((idx, idx + 1))
    return runs


def write_manifest(examples: list[TrainingExample], path: str | os.PathLike) -> None:
    """Training-example manifest as JSON-lines; byte-stable for fixed inputs."""
    lines = [
        json.dumps(example.to_record(), ensure_ascii=False, sort_keys=True)
        for example in examples
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_manifest(path: str | os.PathLike) -> list[dict]:
    records = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", lineno) from exc
    return records
