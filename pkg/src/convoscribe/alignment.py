"""Word-level Levenshtein alignment with deterministic backtrace.

The cost matrix is filled row-by-row with numpy (the horizontal insertion
dependency is resolved with a running-minimum trick), so whole-conversation
alignments of tens of thousands of words stay fast. The backtrace prefers
Correct > Substitute > Delete > Insert among cost-equal moves, which pins
down a single alignment and makes downstream speaker-error counts
reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import UndefinedRateError, ValidationError
from .transcript import WordToken, is_control_token


class OpKind(Enum):
    CORRECT = "correct"
    SUBSTITUTE = "substitute"
    INSERT = "insert"
    DELETE = "delete"


@dataclass(frozen=True)
class AlignOp:
    kind: OpKind
    hyp_idx: int | None = None
    ref_idx: int | None = None


def correct(hyp_idx: int, ref_idx: int) -> AlignOp:
    return AlignOp(OpKind.CORRECT, hyp_idx, ref_idx)


def substitute(hyp_idx: int, ref_idx: int) -> AlignOp:
    return AlignOp(OpKind.SUBSTITUTE, hyp_idx, ref_idx)


def insert(hyp_idx: int) -> AlignOp:
    return AlignOp(OpKind.INSERT, hyp_idx, None)


def delete(ref_idx: int) -> AlignOp:
    return AlignOp(OpKind.DELETE, None, ref_idx)


@dataclass(frozen=True)
class WordAlignment:
    """An alignment of a hypothesis word sequence against a reference."""

    ops: tuple[AlignOp, ...]
    n_hyp: int
    n_ref: int

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))
        hyp_seen = sorted(
            op.hyp_idx for op in self.ops
            if op.kind in (OpKind.CORRECT, OpKind.SUBSTITUTE, OpKind.INSERT)
        )
        ref_seen = sorted(
            op.ref_idx for op in self.ops
            if op.kind in (OpKind.CORRECT, OpKind.SUBSTITUTE, OpKind.DELETE)
        )
        if hyp_seen != list(range(self.n_hyp)):
            raise ValidationError("alignment does not cover hypothesis indices exactly once")
        if ref_seen != list(range(self.n_ref)):
            raise ValidationError("alignment does not cover reference indices exactly once")

    @cached_property
    def counts(self) -> tuple[int, int, int, int]:
        """(correct, substitutions, insertions, deletions)."""
        c = s = i = d = 0
        for op in self.ops:
            if op.kind is OpKind.CORRECT:
                c += 1
            elif op.kind is OpKind.SUBSTITUTE:
                s += 1
            elif op.kind is OpKind.INSERT:
                i += 1
            else:
                d += 1
        return c, s, i, d

    @property
    def edit_cost(self) -> int:
        c, s, i, d = self.counts
        return s + i + d

    def matched_pairs(self) -> list[tuple[int, int]]:
        """(hyp_idx, ref_idx) for every Correct/Substitute op, in order."""
        return [
            (op.hyp_idx, op.ref_idx)
            for op in self.ops
            if op.kind in (OpKind.CORRECT, OpKind.SUBSTITUTE)
        ]


def _texts(words: Sequence[str | WordToken]) -> list[str]:
    return [w.text if isinstance(w, WordToken) else str(w) for w in words]


def align_words(
    hyp: Sequence[str | WordToken],
    ref: Sequence[str | WordToken],
    case_sensitive: bool = True,
) -> WordAlignment:
    """Minimum-edit alignment of hypothesis words against reference words.

    With ``case_sensitive`` set (the default), tokens differing only in case
    count as substitutions. With it cleared, tokens are compared after
    ``str.lower``.
    """
    hyp_texts, ref_texts = _texts(hyp), _texts(ref)
    if not case_sensitive:
        hyp_texts = [t.lower() for t in hyp_texts]
        ref_texts = [t.lower() for t in ref_texts]
    n, m = len(hyp_texts), len(ref_texts)

    codes: dict[str, int] = {}
    hyp_codes = np.fromiter((codes.setdefault(t, len(codes)) for t in hyp_texts), np.int64, n)
    ref_codes = np.fromiter((codes.setdefault(t, len(codes)) for t in ref_texts), np.int64, m)

    dtype = np.uint16 if n + m < np.iinfo(np.uint16).max else np.uint32
    dist = np.empty((n + 1, m + 1), dtype=dtype)
    dist[0, :] = np.arange(m + 1, dtype=dtype)
    positions = np.arange(m + 1, dtype=np.int64)
    row = np.empty(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        prev = dist[i - 1].astype(np.int64)
        row[0] = i
        np.minimum(prev[1:] + 1, prev[:-1] + (ref_codes != hyp_codes[i - 1]), out=row[1:])
        # Fold in the horizontal insertion moves: row[j] = min_k<=j row0[k] + (j-k).
        np.subtract(row, positions, out=row)
        np.minimum.accumulate(row, out=row)
        np.add(row, positions, out=row)
        dist[i] = row

    ops: list[AlignOp] = []
    i, j = n, m
    while i > 0 or j > 0:
        here = dist[i, j]
        if i > 0 and j > 0 and hyp_codes[i - 1] == ref_codes[j - 1] and dist[i - 1, j - 1] == here:
            ops.append(correct(i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and dist[i - 1, j - 1] + 1 == here:
            ops.append(substitute(i - 1, j - 1))
            i, j = i - 1, j - 1
        elif j > 0 and dist[i, j - 1] + 1 == here:
            ops.append(delete(j - 1))
            j -= 1
        else:
            ops.append(insert(i - 1))
            i -= 1
    ops.reverse()
    return WordAlignment(tuple(ops), n, m)


def wer(alignment: WordAlignment) -> float:
    """Word error rate: (S + I + D) / (S + C + D); may exceed 1."""
    c, s, i, d = alignment.counts
    if s + c + d == 0:
        raise UndefinedRateError("WER is undefined for an empty reference")
    return (s + i + d) / (s + c + d)


def strip_control_tokens(tokens: Iterable[str]) -> list[str]:
    """Drop [US] separators and speaker-id tokens, preserving word order."""
    return [t for t in tokens if not is_control_token(t)]
