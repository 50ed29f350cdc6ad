"""Speaker-label production for the three transcription frameworks.

Separate pipelines reconcile time-positioned diarization segments onto
ASR words by temporal overlap. Joint models carry speaker tokens in their
output stream. The boosted variant keeps the joint model's utterance bounds
but replaces its speaker tokens with cluster labels computed from
utterance-averaged speaker embeddings.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .decoding import AttentionSnapshot
from .errors import ContractError, ParseError, ValidationError
from .metrics import DiarizedWords
from .transcript import (
    UNKNOWN_SPEAKER,
    SpeakerId,
    TimeSpan,
    Utterance,
    WordToken,
    split_joint_stream,
)


@dataclass(frozen=True)
class FrameEmbeddings:
    """Per-frame speaker embeddings from a diarization acoustic model."""

    matrix: np.ndarray
    frame_rate: float

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[1] < 1:
            raise ValidationError(f"embedding matrix must be 2-D, got shape {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise ValidationError("embeddings contain non-finite values")
        object.__setattr__(self, "matrix", matrix)


@dataclass(frozen=True)
class DiarizationSegments:
    """Sorted, non-overlapping (span, cluster id) speech segments."""

    segments: tuple[tuple[TimeSpan, str], ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        prev_end = None
        for i, (span, _) in enumerate(self.segments):
            if prev_end is not None and span.start < prev_end:
                raise ValidationError(f"diarization segment {i} overlaps its predecessor")
            prev_end = span.end


def parse_diarization_segments(path: str | os.PathLike) -> DiarizationSegments:
    """Parse line-delimited ``start end clusterId`` records."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) != 3:
            raise ParseError(f"expected 'start end clusterId', got {stripped!r}", lineno)
        try:
            span = TimeSpan(float(parts[0]), float(parts[1]))
        except (ValueError, ValidationError) as exc:
            raise ParseError(str(exc), lineno) from exc
        rows.append((span, parts[2]))
    return DiarizationSegments(tuple(rows))


def word_embedding_from_af(
    frames: FrameEmbeddings, snapshot: AttentionSnapshot, window_start: int
) -> np.ndarray:
    """Attention-weighted average of frame embeddings for one decoded word."""
    weights = snapshot.weights
    if weights.size == 0:
        raise ContractError("cannot embed a word from an empty attention snapshot")
    averaged = weights.mean(axis=(0, 1))
    window_len = averaged.shape[0]
    matrix = frames.matrix
    if window_start < 0 or window_start + window_len > len(matrix):
        raise ContractError(
            f"attention window [{window_start}, {window_start + window_len}) exceeds "
            f"the {len(matrix)}-frame embedding matrix"
        )
    return averaged @ matrix[window_start : window_start + window_len]


def utterance_embedding(word_embeddings: Sequence[np.ndarray]) -> np.ndarray:
    """Unweighted mean of the word embeddings inside one utterance."""
    if len(word_embeddings) == 0:
        raise ContractError("an utterance embedding needs at least one word embedding")
    return np.mean(np.asarray(word_embeddings, dtype=np.float64), axis=0)


def embedding_for_span(frames: FrameEmbeddings, span: TimeSpan) -> np.ndarray:
    """Mean frame embedding over a time span (nearest frame when empty)."""
    lo = int(np.ceil(span.start * frames.frame_rate - 1e-9))
    hi = int(np.ceil(span.end * frames.frame_rate - 1e-9))
    lo = max(lo, 0)
    hi = min(hi, len(frames.matrix))
    if hi <= lo:
        nearest = int(np.clip(round(span.start * frames.frame_rate), 0, len(frames.matrix) - 1))
        return frames.matrix[nearest].copy()
    return frames.matrix[lo:hi].mean(axis=0)


@dataclass(frozen=True)
class ClusterConfig:
    algorithm: str = "hdbscan"
    min_cluster_size: int = 5
    min_samples: int | None = None
    distance_threshold: float | None = None
    metric: str = "euclidean"

    def __post_init__(self):
        if self.algorithm not in ("hdbscan", "agglomerative"):
            raise ValidationError(f"unknown clustering algorithm {self.algorithm!r}")
        if self.metric not in ("euclidean", "cosine"):
            raise ValidationError(f"unknown clustering metric {self.metric!r}")
        if self.min_cluster_size < 2:
            raise ValidationError("min_cluster_size must be at least 2")


def _relabel_first_seen(labels: np.ndarray) -> list[int]:
    mapping: dict[int, int] = {}
    out = []
    for label in labels:
        mapping.setdefault(int(label), len(mapping))
        out.append(mapping[int(label)])
    return out


def cluster_speakers(
    embeddings: Sequence[np.ndarray], config: ClusterConfig = ClusterConfig()
) -> list[int]:
    """Cluster utterance embeddings; every input receives a label.

    Density clustering (HDBSCAN) is the default; its noise points are folded
    into the nearest cluster centroid since downstream word-level scoring
    needs a label per utterance. Inputs too small for density estimation, or
    configs asking for it, use a distance-threshold agglomerative fallback.
    Labels are renumbered in order of first appearance, so clusterings are
    comparable up to input order.
    """
    from scipy.spatial.distance import pdist
    from sklearn.cluster import HDBSCAN, AgglomerativeClustering

    points = np.asarray(embeddings, dtype=np.float64)
    if points.ndim != 2 or len(points) == 0:
        raise ValidationError("clustering needs a non-empty 2-D embedding array")
    if len(points) == 1:
        return [0]
    if config.metric == "cosine":
        norms = np.linalg.norm(points, axis=1, keepdims=True)
        points = points / np.where(norms == 0, 1.0, norms)

    use_fallback = (
        config.algorithm == "agglomerative" or len(points) < 2 * config.min_cluster_size
    )
    if use_fallback:
        threshold = config.distance_threshold
        if threshold is None:
            threshold = max(float(pdist(points).max()) / 2, 1e-12)
        model = AgglomerativeClustering(
            n_clusters=None, distance_threshold=threshold, linkage="average"
        )
        labels = model.fit_predict(points)
        return _relabel_first_seen(labels)

    model = HDBSCAN(
        min_cluster_size=min(config.min_cluster_size, len(points)),
        min_samples=config.min_samples,
        allow_single_cluster=True,
    )
    labels = model.fit_predict(points).astype(int)
    if not np.any(labels >= 0):
        return [0] * len(points)
    clusters = sorted(set(labels[labels >= 0]))
    centroids = np.stack([points[labels == c].mean(axis=0) for c in clusters])
    for i in np.nonzero(labels < 0)[0]:
        nearest = int(np.argmin(np.linalg.norm(centroids - points[i], axis=1)))
        labels[i] = clusters[nearest]
    return _relabel_first_seen(labels)


def reconcile_separate(
    words: Sequence[WordToken], segments: DiarizationSegments
) -> DiarizedWords:
    """Assign each timed ASR word the diarization segment label it overlaps most.

    Ties break toward the earlier segment; words overlapping nothing take the
    nearest segment's label.
    """
    if not segments.segments:
        raise ValidationError("reconciliation needs at least one diarization segment")
    speakers = []
    for word in words:
        if word.span is None:
            raise ContractError(f"word {word.text!r} carries no time span")
        best_label = None
        best_overlap = 0.0
        for span, label in segments.segments:
            overlap = span.intersection(word.span)
            if overlap > best_overlap:
                best_overlap, best_label = overlap, label
        if best_label is None:
            gaps = [
                max(span.start - word.span.end, word.span.start - span.end, 0.0)
                for span, _ in segments.segments
            ]
            best_label = segments.segments[int(np.argmin(gaps))][1]
        speakers.append(SpeakerId(best_label))
    return DiarizedWords(tuple(words), tuple(speakers))


def extract_joint_speakers(tokens: Sequence[str]) -> list[Utterance]:
    """Split a joint-format token stream into speaker-labelled utterances.

    Segments without a speaker token degrade to the reserved UNKNOWN label.
    Spans are unknown at this level and come back zero-length.
    """
    utterances = []
    for segment in split_joint_stream(tokens):
        speaker = segment.speaker if segment.speaker is not None else SpeakerId(UNKNOWN_SPEAKER)
        utterances.append(
            Utterance(
                speaker=speaker,
                words=tuple(WordToken(w) for w in segment.words),
                span=TimeSpan(0.0, 0.0),
                terminated=segment.terminated,
            )
        )
    return utterances


def sd_plus(
    utterances: Sequence[Utterance],
    frames: FrameEmbeddings,
    per_word_attention: Sequence[Sequence[tuple[AttentionSnapshot, int]]],
    config: ClusterConfig = ClusterConfig(),
) -> DiarizedWords:
    """Replace joint-model speaker labels with embedding cluster labels.

    Utterance bounds stay as the joint model produced them; each utterance is
    embedded by averaging its words' attention-focused frame embeddings, and
    the resulting cluster id labels every word of the utterance.
    """
    if len(per_word_attention) != len(utterances):
        raise ContractError(
            f"{len(per_word_attention)} attention groups for {len(utterances)} utterances"
        )
    embeddable = []
    embeddings = []
    for utterance, word_atts in zip(utterances, per_word_attention):
        if len(word_atts) != len(utterance.words):
            raise ContractError(
                f"{len(word_atts)} attention snapshots for {len(utterance.words)} words"
            )
        if not utterance.words:
            continue
        word_embs = [
            word_embedding_from_af(frames, snapshot, window_start)
            for snapshot, window_start in word_atts
        ]
        embeddable.append(utterance)
        embeddings.append(utterance_embedding(word_embs))
    if not embeddable:
        return DiarizedWords((), ())
    labels = cluster_speakers(embeddings, config)
    words: list[WordToken] = []
    speakers: list[SpeakerId] = []
    for utterance, label in zip(embeddable, labels):
        speaker = SpeakerId(f"spk{label}")
        words.extend(utterance.words)
        speakers.extend([speaker] * len(utterance.words))
    return DiarizedWords(tuple(words), tuple(speakers))
