"""In-memory transcript model: conversations, utterances, words, speakers.

All types are frozen dataclasses validated on construction; operations are
pure functions, so everything here is safe to share across threads.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from enum import Enum

from .errors import ValidationError

#: Utterance separator token that opens/terminates every target sequence.
US_TOKEN = "[US]"

#: Speaker tokens are the speaker id wrapped in square brackets, e.g. "[Ira]".
_SPEAKER_TOKEN_RE = re.compile(r"^\[[^\[\]\s]+\]$")

#: Reserved label for utterances whose speaker could not be determined.
UNKNOWN_SPEAKER = "UNKNOWN"

# Word runs keep internal apostrophes and hyphens; every other punctuation
# character becomes its own token.
_TOKEN_RE = re.compile(r"\w+(?:['’\-‑]\w+)*|[^\w\s]", re.UNICODE)


class Role(Enum):
    HOST = "host"
    INTERVIEWER = "interviewer"
    SUBJECT = "subject"


@dataclass(frozen=True)
class TimeSpan:
    """Half-open-ish span in seconds; start and end are both inclusive hints."""

    start: float
    end: float

    def __post_init__(self):
        if self.start < 0:
            raise ValidationError(f"span start must be non-negative, got {self.start}")
        if self.start > self.end:
            raise ValidationError(f"span start {self.start} exceeds end {self.end}")

    @property
    def duration(self) -> float:
        return self.end - self.start

    def intersection(self, other: "TimeSpan") -> float:
        return max(0.0, min(self.end, other.end) - max(self.start, other.start))

    def contains(self, other: "TimeSpan") -> bool:
        return self.start <= other.start and other.end <= self.end


@dataclass(frozen=True)
class WordToken:
    text: str
    span: TimeSpan | None = None

    def __post_init__(self):
        if not self.text:
            raise ValidationError("word token text must be non-empty")
        if any(c.isspace() for c in self.text):
            raise ValidationError(f"word token {self.text!r} contains whitespace")


@dataclass(frozen=True)
class SpeakerId:
    id: str
    role: Role | None = None

    def __post_init__(self):
        if not self.id:
            raise ValidationError("speaker id must be non-empty")


@dataclass(frozen=True)
class Utterance:
    speaker: SpeakerId
    words: tuple[WordToken, ...]
    span: TimeSpan
    terminated: bool = True

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(self.words))
        spans = [w.span for w in self.words]
        if spans and all(s is not None for s in spans):
            for w in self.words:
                if not self.span.contains(w.span):
                    raise ValidationError(
                        f"word {w.text!r} span {w.span} lies outside utterance span {self.span}"
                    )

    @property
    def texts(self) -> tuple[str, ...]:
        return tuple(w.text for w in self.words)

    @property
    def text(self) -> str:
        return " ".join(self.texts)


@dataclass(frozen=True)
class Conversation:
    id: str
    utterances: tuple[Utterance, ...]
    duration: float = field(default=0.0)

    def __post_init__(self):
        object.__setattr__(self, "utterances", tuple(self.utterances))
        last_start = None
        for i, utt in enumerate(self.utterances):
            if last_start is not None and utt.span.start < last_start:
                raise ValidationError(
                    f"utterance {i} starts at {utt.span.start} before previous start {last_start}"
                )
            last_start = utt.span.start
        max_end = max((u.span.end for u in self.utterances), default=0.0)
        if self.duration == 0.0:
            object.__setattr__(self, "duration", max_end)
        elif self.duration < max_end:
            raise ValidationError(
                f"conversation duration {self.duration} shorter than last utterance end {max_end}"
            )

    @property
    def speakers(self) -> tuple[SpeakerId, ...]:
        """Speaker inventory in order of first appearance."""
        seen: dict[SpeakerId, None] = {}
        for utt in self.utterances:
            seen.setdefault(utt.speaker)
        return tuple(seen)

    @property
    def words(self) -> tuple[WordToken, ...]:
        return tuple(w for u in self.utterances for w in u.words)


def tokenize_words(text: str) -> list[WordToken]:
    """Split raw text into word tokens with a fixed, reproducible rule set.

    Whitespace separates tokens; punctuation detaches into single-character
    tokens except apostrophes and hyphens between word characters, which stay
    glued ("It's", "well-known"). Joining the result with single spaces and
    re-tokenizing is a no-op.
    """
    return [WordToken(t) for t in _TOKEN_RE.findall(text)]


def is_control_token(token: str) -> bool:
    """True for the [US] separator and bracketed speaker-id tokens."""
    return token == US_TOKEN or bool(_SPEAKER_TOKEN_RE.match(token))


def speaker_token(speaker: SpeakerId | str) -> str:
    sid = speaker.id if isinstance(speaker, SpeakerId) else speaker
    return f"[{sid}]"


def speaker_from_token(token: str) -> SpeakerId:
    if not _SPEAKER_TOKEN_RE.match(token) or token == US_TOKEN:
        raise ValidationError(f"{token!r} is not a speaker token")
    return SpeakerId(token[1:-1])


@dataclass(frozen=True)
class JointSegment:
    """One utterance-worth of a joint-format token stream.

    ``start``/``end`` index the original stream (end is one past the [US]
    terminator, or the stream end for a trailing unterminated segment).
    ``word_positions`` index the word tokens within the stream.
    """

    words: tuple[str, ...]
    word_positions: tuple[int, ...]
    speaker: SpeakerId | None
    start: int
    end: int
    terminated: bool


def split_joint_stream(tokens) -> list[JointSegment]:
    """Split a joint-format token stream at [US] separators.

    Within each segment the final speaker token names the speaker of every
    preceding word; segments without one get no speaker (callers substitute
    the reserved UNKNOWN label). Tokens after the last [US] form a trailing
    unterminated segment.
    """
    segments: list[JointSegment] = []
    words: list[str] = []
    positions: list[int] = []
    speaker_tok: str | None = None
    seg_start = 0
    tokens = list(tokens)
    for i, tok in enumerate(tokens):
        if tok == US_TOKEN:
            speaker = speaker_from_token(speaker_tok) if speaker_tok else None
            segments.append(
                JointSegment(tuple(words), tuple(positions), speaker, seg_start, i + 1, True)
            )
            words, positions, speaker_tok = [], [], None
            seg_start = i + 1
        elif is_control_token(tok):
            speaker_tok = tok
        else:
            words.append(tok)
            positions.append(i)
    if seg_start < len(tokens):
        speaker = speaker_from_token(speaker_tok) if speaker_tok else None
        segments.append(
            JointSegment(tuple(words), tuple(positions), speaker, seg_start, len(tokens), False)
        )
    return segments


def join_joint_stream(utterances) -> list[str]:
    """Serialize utterances back into the joint token format.

    The inverse of :func:`split_joint_stream` for well-formed streams: words,
    then the speaker token, then [US] (omitted when the utterance is
    unterminated).
    """
    tokens: list[str] = []
    for utt in utterances:
        tokens.extend(w.text for w in utt.words)
        if utt.terminated:
            if utt.speaker.id != UNKNOWN_SPEAKER:
                tokens.append(speaker_token(utt.speaker))
            tokens.append(US_TOKEN)
    return tokens


def _is_punctuation(token: str) -> bool:
    return all(unicodedata.category(c).startswith("P") for c in token)


def normalize(conversation: Conversation, mode: str) -> Conversation:
    """Apply an evaluation normalization mode.

    ``rich`` is the identity. ``simulated`` mirrors conventional ASR scoring:
    every token is lower-cased and tokens made purely of punctuation are
    dropped. Utterances emptied by the filter are retained so the speaker-turn
    structure survives for diarization metrics.
    """
    if mode == "rich":
        return conversation
    if mode != "simulated":
        raise ValidationError(f"unknown normalization mode {mode!r}")
    utterances = []
    for utt in conversation.utterances:
        words = tuple(
            WordToken(w.text.lower(), w.span)
            for w in utt.words
            if not _is_punctuation(w.text)
        )
        utterances.append(
            Utterance(speaker=utt.speaker, words=words, span=utt.span, terminated=utt.terminated)
        )
    return Conversation(conversation.id, tuple(utterances), conversation.duration)
