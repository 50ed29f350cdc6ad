"""Striding-window attention decoding for long conversations.

A model exposes one step of sequence transduction over a fixed-length
feature window. The decoder tracks the attention focus (AF) of each emitted
token; when the AF pushes past a configurable proportion of the window, the
window strides forward and context tokens whose AF fell behind are committed
to the output. An n-gram repetition detector paired with an AF-stall check
recovers from degenerate loops by pruning the repeated tail and forcing a
stride.

Single-utterance (aligned) decoding uses a conventional length-bounded beam
search over the same model contract.
"""

from __future__ import annotations

import abc
import logging
from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError, ModelContractError, ValidationError
from .transcript import (
    US_TOKEN,
    UNKNOWN_SPEAKER,
    Conversation,
    SpeakerId,
    TimeSpan,
    Utterance,
    WordToken,
    split_joint_stream,
)
from .vad import VadSegment, speech_frame_map

logger = logging.getLogger(__name__)

DISTRIBUTION_TOLERANCE = 1e-6
ATTENTION_TOLERANCE = 1e-6


@dataclass(frozen=True)
class AttentionSnapshot:
    """Cross-attention weights indexed (layer, head, window frame)."""

    weights: np.ndarray

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.ndim != 3:
            raise ValidationError(f"attention weights must be 3-D, got shape {weights.shape}")
        object.__setattr__(self, "weights", weights)

    @property
    def window_length(self) -> int:
        return self.weights.shape[2]


class ModelInterface(abc.ABC):
    """One decoding step of a sequence-transduction model.

    ``step`` receives the current feature window and the decoder's (possibly
    truncated) context tokens, and returns a probability distribution over
    ``vocab`` plus an attention snapshot over the window frames. Distributions
    and per-head attention rows must each sum to 1 within 1e-6.
    """

    @property
    @abc.abstractmethod
    def vocab(self) -> Sequence[str]: ...

    @abc.abstractmethod
    def step(
        self, feature_window: np.ndarray, context: Sequence[str]
    ) -> tuple[np.ndarray, AttentionSnapshot]: ...


@dataclass(frozen=True)
class StridingConfig:
    advance_fraction: float = 0.75
    stride_fraction: float = 0.5
    max_ngram: int = 4
    repeat_threshold: int = 3
    af_stall_window: int = 20
    af_stall_epsilon: float = 25.0
    end_margin_frames: float = 25.0
    beam_size: int = 5
    frame_rate: float = 100.0
    window_seconds: float = 30.0
    max_output_tokens: int = 512
    max_steps_per_frame: float = 1.0

    def __post_init__(self):
        if not 0 < self.advance_fraction < 1:
            raise ValidationError("advance_fraction must lie in (0, 1)")
        if not 0 < self.stride_fraction < 1:
            raise ValidationError("stride_fraction must lie in (0, 1)")
        if self.repeat_threshold < 2:
            raise ValidationError("repeat_threshold must be at least 2")
        for name in ("max_ngram", "af_stall_window", "beam_size", "max_output_tokens"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be positive")
        for name in ("af_stall_epsilon", "end_margin_frames", "frame_rate",
                     "window_seconds", "max_steps_per_frame"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")

    @property
    def window_frames(self) -> int:
        return max(1, int(round(self.window_seconds * self.frame_rate)))


@dataclass(frozen=True)
class StrideEvent:
    step: int
    old_start: int
    new_start: int
    committed: int
    forced: bool = False


@dataclass(frozen=True)
class RepetitionEvent:
    step: int
    ngram: tuple[str, ...]
    repeats: int


class DecoderSession:
    """Mutable state of one striding decode; single-threaded by design."""

    def __init__(self, total_frames: int, config: StridingConfig):
        if total_frames < 1:
            raise ValidationError("cannot decode an empty feature matrix")
        self.total_frames = total_frames
        self.config = config
        self.window_length = min(config.window_frames, total_frames)
        self.window_start = 0
        self.context: list[str] = []
        self.af_history: list[float] = []
        self.committed: list[str] = []
        self.committed_af: list[float] = []
        # AFs of the most recent decoded tokens; the stall detector's view.
        # Cleared when pruning rewrites history, so recovery observes only
        # what the model produces afterwards.
        self.stall_afs: deque[float] = deque(maxlen=config.af_stall_window)
        self.steps = 0

    @property
    def max_window_start(self) -> int:
        return self.total_frames - self.window_length

    def append(self, token: str, af: float) -> None:
        self.context.append(token)
        self.af_history.append(af)
        self.stall_afs.append(af)
        self.steps += 1

    def commit_rest(self) -> None:
        self.committed.extend(self.context)
        self.committed_af.extend(self.af_history)
        self.context = []
        self.af_history = []

    @property
    def output_tokens(self) -> list[str]:
        return self.committed + self.context

    @property
    def output_afs(self) -> list[float]:
        return self.committed_af + self.af_history


def attention_focus(snapshot: AttentionSnapshot, window_start: int) -> float:
    """Expected frame position averaged over layers and heads, made absolute."""
    weights = snapshot.weights
    if weights.size == 0:
        raise ContractError("attention focus of an empty snapshot is undefined")
    positions = np.arange(weights.shape[2], dtype=np.float64)
    per_head = (weights * positions).sum(axis=2)
    return float(per_head.mean()) + window_start


def should_advance(session: DecoderSession) -> bool:
    """True when the latest AF shifted beyond the advance proportion."""
    if not session.af_history:
        raise ContractError("should_advance needs at least one decoded token")
    offset = session.af_history[-1] - session.window_start
    return offset > session.config.advance_fraction * session.window_length


def advance_window(session: DecoderSession, forced: bool = False) -> StrideEvent:
    """Stride the window forward and commit context the window left behind."""
    stride = max(1, int(round(session.config.stride_fraction * session.window_length)))
    new_start = min(session.window_start + stride, session.max_window_start)
    cut = 0
    while cut < len(session.context) and session.af_history[cut] < new_start:
        cut += 1
    session.committed.extend(session.context[:cut])
    session.committed_af.extend(session.af_history[:cut])
    del session.context[:cut]
    del session.af_history[:cut]
    event = StrideEvent(session.steps, session.window_start, new_start, cut, forced)
    session.window_start = new_start
    logger.debug(
        "stride at step %d: window %d -> %d, committed %d tokens%s",
        event.step, event.old_start, event.new_start, cut, " (forced)" if forced else "",
    )
    return event


def _periodic_run_length(session: DecoderSession, n: int) -> int:
    """Length of the longest period-``n`` suffix of the decoded output.

    Counted across the committed/context boundary so copies a stride already
    committed still weigh against the repeat threshold; phase does not matter
    (an alternating stream is one run regardless of where copies start). The
    walk is capped just past what pruning and thresholding need.
    """
    context, committed = session.context, session.committed
    total = len(context) + len(committed)

    def token(i: int) -> str:  # 1-indexed from the end of the output
        if i <= len(context):
            return context[-i]
        return committed[len(committed) - (i - len(context))]

    bound = min(total - n, len(context) + n * (session.config.repeat_threshold + 1))
    matches = 0
    while matches < bound and token(matches + 1) == token(matches + 1 + n):
        matches += 1
    return n + matches


def detect_repetition(session: DecoderSession) -> RepetitionEvent | None:
    """Fire when the context tail loops and the AF has stopped advancing.

    The repeating run is the longest period-n suffix of the decoded output;
    an event fires when it spans at least ``repeat_threshold`` whole copies
    while the recent attention focus is flat.
    """
    config = session.config
    recent = session.stall_afs
    if not recent:
        return None
    if max(recent) - min(recent) >= config.af_stall_epsilon:
        return None
    context = session.context
    for n in range(1, config.max_ngram + 1):
        if len(context) < n:
            break
        run = _periodic_run_length(session, n)
        if run // n >= config.repeat_threshold:
            return RepetitionEvent(session.steps, tuple(context[-n:]), run // n)
    return None


def prune_repeats(session: DecoderSession, event: RepetitionEvent) -> StrideEvent | None:
    """Collapse the repeating run to one occurrence and force a stride.

    Committed output is never mutated: the context portion of the run is
    removed entirely when the run extends into committed output, and down to
    a single occurrence otherwise.
    """
    n = len(event.ngram)
    if tuple(session.context[-n:]) != event.ngram:
        raise ContractError("repetition event does not match the session's context tail")
    run = _periodic_run_length(session, n)
    in_context = min(run, len(session.context))
    remove = in_context if run > in_context else max(0, in_context - n)
    if remove > 0:
        del session.context[-remove:]
        del session.af_history[-remove:]
    session.stall_afs.clear()
    logger.debug(
        "pruned %d run tokens of period %r at step %d", remove, event.ngram, event.step
    )
    if session.window_start < session.max_window_start:
        return advance_window(session, forced=True)
    return None


def _validate_distribution(dist: np.ndarray, vocab_size: int, step: int) -> np.ndarray:
    dist = np.asarray(dist, dtype=np.float64)
    if dist.shape != (vocab_size,):
        raise ModelContractError(
            f"distribution shape {dist.shape} does not match vocabulary size {vocab_size}",
            step,
        )
    if not np.all(np.isfinite(dist)) or np.any(dist < 0):
        raise ModelContractError("distribution has negative or non-finite entries", step)
    total = float(dist.sum())
    if abs(total - 1.0) > DISTRIBUTION_TOLERANCE:
        raise ModelContractError(f"distribution sums to {total}, not 1", step)
    return dist


def _validate_attention(snapshot: AttentionSnapshot, window_length: int, step: int) -> None:
    if not isinstance(snapshot, AttentionSnapshot):
        raise ModelContractError("model did not return an AttentionSnapshot", step)
    weights = snapshot.weights
    if weights.size == 0:
        raise ModelContractError("attention snapshot is empty", step)
    if weights.shape[2] != window_length:
        raise ModelContractError(
            f"attention covers {weights.shape[2]} frames, window has {window_length}", step
        )
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise ModelContractError("attention has negative or non-finite weights", step)
    sums = weights.sum(axis=2)
    if np.any(np.abs(sums - 1.0) > ATTENTION_TOLERANCE):
        raise ModelContractError("attention rows do not sum to 1 per (layer, head)", step)


def decode_unaligned(
    model: ModelInterface,
    features: np.ndarray,
    vad: list[VadSegment] | None,
    config: StridingConfig,
    conversation_id: str = "decoded",
    events: list | None = None,
) -> Conversation:
    """Greedy striding-window decode of a full episode.

    Non-speech frames are excised per the VAD segments before windowing; the
    emitted token stream is segmented at [US] tokens with the trailing speaker
    token naming each utterance's speaker, and utterance spans are mapped back
    through the excision map to episode time.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ValidationError(f"feature matrix must be 2-D, got shape {features.shape}")
    keep = speech_frame_map(vad, len(features), config.frame_rate)
    if keep.size == 0:
        return Conversation(conversation_id, (), len(features) / config.frame_rate)
    speech = features[keep]
    session = DecoderSession(len(speech), config)
    vocab = list(model.vocab)
    step_cap = max(1, int(config.max_steps_per_frame * len(speech)))

    while session.steps < step_cap:
        window = speech[session.window_start : session.window_start + session.window_length]
        dist, snapshot = model.step(window, tuple(session.context))
        dist = _validate_distribution(dist, len(vocab), session.steps)
        _validate_attention(snapshot, session.window_length, session.steps)
        token = vocab[int(np.argmax(dist))]
        af = attention_focus(snapshot, session.window_start)
        session.append(token, af)
        repetition = detect_repetition(session)
        if repetition is not None:
            if events is not None:
                events.append(repetition)
            logger.info(
                "repetition at step %d: %r x%d", repetition.step, repetition.ngram,
                repetition.repeats,
            )
            stride = prune_repeats(session, repetition)
            if stride is not None and events is not None:
                events.append(stride)
            continue
        # The episode is done once an utterance closes with the attention
        # focus at (or within a margin of) the end of the speech features.
        # Intermediate separators attend well before the end, so they never
        # trigger this even when the final window contains several of them.
        if (
            token == US_TOKEN
            and session.window_start == session.max_window_start
            and af >= session.total_frames - config.end_margin_frames
        ):
            break
        if should_advance(session) and session.window_start < session.max_window_start:
            stride = advance_window(session)
            if events is not None:
                events.append(stride)
    else:
        logger.warning(
            "decode of %s hit the %d-step cap before the episode ended",
            conversation_id, step_cap,
        )
    session.commit_rest()
    return _assemble_conversation(session, keep, config, conversation_id, len(features))


def _assemble_conversation(
    session: DecoderSession,
    keep: np.ndarray,
    config: StridingConfig,
    conversation_id: str,
    total_frames: int,
) -> Conversation:
    tokens = session.output_tokens
    afs = session.output_afs

    def to_seconds(af: float) -> float:
        speech_idx = int(np.clip(round(af), 0, len(keep) - 1))
        return float(keep[speech_idx]) / config.frame_rate

    segments = split_joint_stream(tokens)
    # Bare separators emitted while draining the end of the episode carry no
    # content; drop them from the tail (mid-stream empties are kept).
    while segments and segments[-1].terminated and not segments[-1].words \
            and segments[-1].speaker is None:
        segments.pop()

    utterances = []
    floor = 0.0
    for segment in segments:
        first = to_seconds(afs[segment.start])
        last = to_seconds(afs[segment.end - 1])
        start, end = min(first, last), max(first, last)
        # Clamp to keep utterance starts non-decreasing under non-monotone AF.
        start = max(start, floor)
        end = max(end, start)
        floor = start
        speaker = segment.speaker if segment.speaker is not None else SpeakerId(UNKNOWN_SPEAKER)
        utterances.append(
            Utterance(
                speaker=speaker,
                words=tuple(WordToken(w) for w in segment.words),
                span=TimeSpan(start, end),
                terminated=segment.terminated,
            )
        )
    return Conversation(conversation_id, tuple(utterances), total_frames / config.frame_rate)


@dataclass(frozen=True)
class _Hypothesis:
    tokens: tuple[str, ...]
    score: float
    terminated: bool = False


def _finish_utterance(tokens: tuple[str, ...], duration: float, terminated: bool) -> Utterance:
    segments = split_joint_stream(tokens)
    if not segments:
        return Utterance(
            SpeakerId(UNKNOWN_SPEAKER), (), TimeSpan(0.0, duration), terminated=terminated
        )
    segment = segments[0]
    speaker = segment.speaker if segment.speaker is not None else SpeakerId(UNKNOWN_SPEAKER)
    return Utterance(
        speaker=speaker,
        words=tuple(WordToken(w) for w in segment.words),
        span=TimeSpan(0.0, duration),
        terminated=terminated and segment.terminated,
    )


def decode_greedy(model: ModelInterface, features: np.ndarray, config: StridingConfig) -> Utterance:
    """Greedy single-utterance decode; the beam-1 reference behaviour."""
    features = np.asarray(features, dtype=np.float64)
    vocab = list(model.vocab)
    tokens: list[str] = []
    terminated = False
    for step in range(config.max_output_tokens):
        dist, snapshot = model.step(features, tuple(tokens))
        dist = _validate_distribution(dist, len(vocab), step)
        _validate_attention(snapshot, len(features), step)
        token = vocab[int(np.argmax(dist))]
        tokens.append(token)
        if token == US_TOKEN:
            terminated = True
            break
    duration = len(features) / config.frame_rate
    return _finish_utterance(tuple(tokens), duration, terminated)


def decode_aligned(model: ModelInterface, features: np.ndarray, config: StridingConfig) -> Utterance:
    """Length-bounded beam search over one utterance's features.

    Returns the highest-scoring terminated hypothesis; when none terminates
    within the length bound, the best live hypothesis comes back with
    ``terminated=False`` so scoring can apply the 100%-WER rule.
    """
    features = np.asarray(features, dtype=np.float64)
    vocab = list(model.vocab)
    beam: list[_Hypothesis] = [_Hypothesis((), 0.0)]
    finished: list[_Hypothesis] = []
    for step in range(config.max_output_tokens):
        candidates: list[tuple[float, int, int]] = []
        for hyp_idx, hyp in enumerate(beam):
            dist, snapshot = model.step(features, hyp.tokens)
            dist = _validate_distribution(dist, len(vocab), step)
            _validate_attention(snapshot, len(features), step)
            with np.errstate(divide="ignore"):
                logs = np.log(dist)
            for tok_idx in range(len(vocab)):
                score = hyp.score + float(logs[tok_idx])
                if score == -np.inf:
                    continue  # zero-probability expansions can never be emitted
                candidates.append((score, hyp_idx, tok_idx))
        candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
        next_beam: list[_Hypothesis] = []
        for score, hyp_idx, tok_idx in candidates[: config.beam_size]:
            tokens = beam[hyp_idx].tokens + (vocab[tok_idx],)
            if vocab[tok_idx] == US_TOKEN:
                finished.append(_Hypothesis(tokens, score, True))
            else:
                next_beam.append(_Hypothesis(tokens, score))
        if not next_beam:
            break
        beam = next_beam

    duration = len(features) / config.frame_rate
    if finished:
        best = max(finished, key=lambda h: h.score)
        return _finish_utterance(best.tokens, duration, True)
    best = max(beam, key=lambda h: h.score)
    return _finish_utterance(best.tokens, duration, False)
