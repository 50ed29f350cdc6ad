"""Speaker-attribution metrics over word alignments.

WDER counts matched (Correct/Substitute) words whose mapped hypothesis
speaker disagrees with the reference speaker; insertions and deletions are
excluded because they have no reference speaker. The multi-speaker variant
minimizes WDER over all injective partial mappings between the hypothesis
and reference speaker inventories, solved as a maximum-weight assignment on
the matched-word count matrix. A factorial-guarded brute-force enumerator
serves as its oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .alignment import AlignOp, OpKind, WordAlignment, align_words, strip_control_tokens, wer
from .errors import ContractError, OracleGuardError, UndefinedRateError, ValidationError
from .transcript import Conversation, SpeakerId, Utterance, WordToken

BRUTEFORCE_MAX_SPEAKERS = 8


@dataclass(frozen=True)
class SpeakerMapping:
    """Injective partial map from hypothesis speaker ids to reference ids."""

    pairs: tuple[tuple[str, str], ...]

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(sorted(self.pairs)))
        hyps = [h for h, _ in self.pairs]
        refs = [r for _, r in self.pairs]
        if len(set(hyps)) != len(hyps):
            raise ValidationError("mapping assigns a hypothesis speaker twice")
        if len(set(refs)) != len(refs):
            raise ValidationError("mapping assigns a reference speaker twice")

    @classmethod
    def from_dict(cls, mapping: Mapping[str, str]) -> "SpeakerMapping":
        return cls(tuple(mapping.items()))

    @classmethod
    def empty(cls) -> "SpeakerMapping":
        return cls(())

    @classmethod
    def identity(cls, hyp_labels: Sequence[str], ref_labels: Sequence[str]) -> "SpeakerMapping":
        refs = set(ref_labels)
        return cls(tuple((h, h) for h in sorted(set(hyp_labels)) if h in refs))

    def get(self, hyp_label: str) -> str | None:
        return dict(self.pairs).get(hyp_label)

    def as_dict(self) -> dict[str, str]:
        return dict(self.pairs)


@dataclass(frozen=True)
class DiarizedWords:
    """A word sequence with one speaker label per word."""

    words: tuple[WordToken, ...]
    speakers: tuple[SpeakerId, ...]

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(self.words))
        object.__setattr__(self, "speakers", tuple(self.speakers))
        if len(self.words) != len(self.speakers):
            raise ValidationError(
                f"{len(self.words)} words but {len(self.speakers)} speaker labels"
            )

    @property
    def labels(self) -> list[str]:
        return [s.id for s in self.speakers]


def _labels(speakers: Sequence[str | SpeakerId]) -> list[str]:
    return [s.id if isinstance(s, SpeakerId) else str(s) for s in speakers]


def _check_parallel(alignment: WordAlignment, hyp_labels, ref_labels) -> None:
    if len(hyp_labels) != alignment.n_hyp:
        raise ContractError(
            f"{len(hyp_labels)} hypothesis speakers for {alignment.n_hyp} hypothesis words"
        )
    if len(ref_labels) != alignment.n_ref:
        raise ContractError(
            f"{len(ref_labels)} reference speakers for {alignment.n_ref} reference words"
        )


def _wrong_counts(
    alignment: WordAlignment,
    hyp_labels: list[str],
    ref_labels: list[str],
    mapping: SpeakerMapping,
) -> tuple[int, int]:
    """(S_w, C_w): matched words whose mapped speaker disagrees with the reference."""
    lookup = mapping.as_dict()
    s_w = c_w = 0
    for op in alignment.ops:
        if op.kind is OpKind.CORRECT or op.kind is OpKind.SUBSTITUTE:
            mapped = lookup.get(hyp_labels[op.hyp_idx])
            if mapped is None or mapped != ref_labels[op.ref_idx]:
                if op.kind is OpKind.CORRECT:
                    c_w += 1
                else:
                    s_w += 1
    return s_w, c_w


def wder(
    alignment: WordAlignment,
    hyp_speakers: Sequence[str | SpeakerId],
    ref_speakers: Sequence[str | SpeakerId],
    mapping: SpeakerMapping,
) -> float:
    """Word diarization error rate (S_w + C_w) / (S + C) under a fixed mapping."""
    hyp_labels, ref_labels = _labels(hyp_speakers), _labels(ref_speakers)
    _check_parallel(alignment, hyp_labels, ref_labels)
    c, s, _, _ = alignment.counts
    if s + c == 0:
        raise UndefinedRateError("WDER is undefined without matched words")
    s_w, c_w = _wrong_counts(alignment, hyp_labels, ref_labels, mapping)
    return (s_w + c_w) / (s + c)


def _match_matrix(
    alignment: WordAlignment, hyp_labels: list[str], ref_labels: list[str]
) -> tuple[list[str], list[str], np.ndarray]:
    """Count matrix of matched words per (hyp speaker, ref speaker) pair."""
    hyp_ids = sorted({hyp_labels[h] for h, _ in alignment.matched_pairs()})
    ref_ids = sorted({ref_labels[r] for _, r in alignment.matched_pairs()})
    hyp_pos = {h: i for i, h in enumerate(hyp_ids)}
    ref_pos = {r: j for j, r in enumerate(ref_ids)}
    counts = np.zeros((len(hyp_ids), len(ref_ids)), dtype=np.int64)
    for h, r in alignment.matched_pairs():
        counts[hyp_pos[hyp_labels[h]], ref_pos[ref_labels[r]]] += 1
    return hyp_ids, ref_ids, counts


def mwde(
    alignment: WordAlignment,
    hyp_speakers: Sequence[str | SpeakerId],
    ref_speakers: Sequence[str | SpeakerId],
) -> tuple[float, SpeakerMapping]:
    """Minimum WDER over all injective partial speaker mappings.

    Solved exactly as a maximum-weight assignment over the matched-word count
    matrix; returns the rate and one minimizing mapping.
    """
    from scipy.optimize import linear_sum_assignment

    hyp_labels, ref_labels = _labels(hyp_speakers), _labels(ref_speakers)
    _check_parallel(alignment, hyp_labels, ref_labels)
    c, s, _, _ = alignment.counts
    matched = s + c
    if matched == 0:
        raise UndefinedRateError("MWDE is undefined without matched words")
    hyp_ids, ref_ids, counts = _match_matrix(alignment, hyp_labels, ref_labels)
    rows, cols = linear_sum_assignment(counts, maximize=True)
    best = int(counts[rows, cols].sum())
    pairs = tuple(
        (hyp_ids[i], ref_ids[j]) for i, j in zip(rows, cols) if counts[i, j] > 0
    )
    return (matched - best) / matched, SpeakerMapping(pairs)


def mwde_bruteforce(
    alignment: WordAlignment,
    hyp_speakers: Sequence[str | SpeakerId],
    ref_speakers: Sequence[str | SpeakerId],
) -> tuple[float, SpeakerMapping]:
    """Exhaustive MWDE over every injective partial mapping; test oracle.

    Refuses speaker inventories above :data:`BRUTEFORCE_MAX_SPEAKERS` a side.
    """
    hyp_labels, ref_labels = _labels(hyp_speakers), _labels(ref_speakers)
    _check_parallel(alignment, hyp_labels, ref_labels)
    c, s, _, _ = alignment.counts
    matched = s + c
    if matched == 0:
        raise UndefinedRateError("MWDE is undefined without matched words")
    hyp_ids, ref_ids, counts = _match_matrix(alignment, hyp_labels, ref_labels)
    if len(hyp_ids) > BRUTEFORCE_MAX_SPEAKERS or len(ref_ids) > BRUTEFORCE_MAX_SPEAKERS:
        raise OracleGuardError(
            f"{len(hyp_ids)}x{len(ref_ids)} speakers exceed the brute-force guard "
            f"of {BRUTEFORCE_MAX_SPEAKERS}"
        )

    n_hyp, n_ref = len(hyp_ids), len(ref_ids)
    table = counts.tolist()
    # Admissible bound for pruning: no suffix can beat the sum of its row maxima.
    suffix_max = [0] * (n_hyp + 1)
    for i in range(n_hyp - 1, -1, -1):
        suffix_max[i] = suffix_max[i + 1] + (max(table[i]) if n_ref else 0)

    best_total = -1
    choice = [-1] * n_hyp
    best_choice: list[int] = []

    def assign(i: int, used: int, total: int):
        nonlocal best_total, best_choice
        if total + suffix_max[i] <= best_total:
            return
        if i == n_hyp:
            best_total = total
            best_choice = choice.copy()
            return
        choice[i] = -1
        assign(i + 1, used, total)
        row = table[i]
        for j in range(n_ref):
            if not used & (1 << j):
                choice[i] = j
                assign(i + 1, used | (1 << j), total + row[j])
        choice[i] = -1

    assign(0, 0, 0)
    mapping = SpeakerMapping(
        tuple(
            (hyp_ids[i], ref_ids[j])
            for i, j in enumerate(best_choice)
            if j >= 0 and table[i][j] > 0
        )
    )
    return (matched - best_total) / matched, mapping


def _scored_words(utterance: Utterance) -> list[str]:
    return strip_control_tokens(w.text for w in utterance.words)


def _pool_aligned(
    hyp: Conversation, ref: Conversation, case_sensitive: bool
) -> tuple[WordAlignment, list[str], list[str], int]:
    """Per-utterance alignments pooled into one, with speaker labels per word.

    Unterminated hypothesis utterances contribute their reference length as
    deletions (exactly 100% WER for that utterance) and never match words.
    """
    if len(hyp.utterances) != len(ref.utterances):
        raise ContractError(
            f"aligned scoring needs matched utterance counts: "
            f"{len(hyp.utterances)} vs {len(ref.utterances)}"
        )
    ops: list[AlignOp] = []
    hyp_labels: list[str] = []
    ref_labels: list[str] = []
    unterminated = 0
    h_off = r_off = 0
    for hu, ru in zip(hyp.utterances, ref.utterances):
        h_words, r_words = _scored_words(hu), _scored_words(ru)
        ref_labels.extend([ru.speaker.id] * len(r_words))
        if not hu.terminated:
            unterminated += 1
            ops.extend(AlignOp(OpKind.DELETE, None, r_off + k) for k in range(len(r_words)))
            r_off += len(r_words)
            continue
        hyp_labels.extend([hu.speaker.id] * len(h_words))
        part = align_words(h_words, r_words, case_sensitive)
        for op in part.ops:
            ops.append(
                AlignOp(
                    op.kind,
                    None if op.hyp_idx is None else op.hyp_idx + h_off,
                    None if op.ref_idx is None else op.ref_idx + r_off,
                )
            )
        h_off += len(h_words)
        r_off += len(r_words)
    return WordAlignment(tuple(ops), h_off, r_off), hyp_labels, ref_labels, unterminated


def _pool_unaligned(
    hyp: Conversation, ref: Conversation, case_sensitive: bool
) -> tuple[WordAlignment, list[str], list[str], int]:
    """One alignment over the flattened conversations."""
    hyp_words: list[str] = []
    hyp_labels: list[str] = []
    ref_words: list[str] = []
    ref_labels: list[str] = []
    for hu in hyp.utterances:
        words = _scored_words(hu)
        hyp_words.extend(words)
        hyp_labels.extend([hu.speaker.id] * len(words))
    for ru in ref.utterances:
        words = _scored_words(ru)
        ref_words.extend(words)
        ref_labels.extend([ru.speaker.id] * len(words))
    alignment = align_words(hyp_words, ref_words, case_sensitive)
    return alignment, hyp_labels, ref_labels, 0


def pool_conversations(
    hyp: Conversation, ref: Conversation, mode: str, case_sensitive: bool = True
) -> tuple[WordAlignment, list[str], list[str], int]:
    """Alignment plus per-word speaker labels for a hypothesis/reference pair."""
    if mode == "aligned":
        return _pool_aligned(hyp, ref, case_sensitive)
    if mode == "unaligned":
        return _pool_unaligned(hyp, ref, case_sensitive)
    raise ValidationError(f"unknown task mode {mode!r}")


def conversation_wer(
    hyp: Conversation, ref: Conversation, mode: str, case_sensitive: bool = True
) -> float:
    """Conversation-level WER with counts pooled across utterances."""
    alignment, _, _, _ = pool_conversations(hyp, ref, mode, case_sensitive)
    return wer(alignment)


@dataclass(frozen=True)
class ConversationScore:
    conversation_id: str
    counts: dict
    unterminated_utterances: int
    wer: float | None
    wder_identity: float | None
    mwde: float | None
    mapping: SpeakerMapping
    identity_wrong: int = 0

    def to_record(self) -> dict:
        return {
            "conversation_id": self.conversation_id,
            "counts": dict(self.counts),
            "unterminated_utterances": self.unterminated_utterances,
            "wer": self.wer,
            "wder_identity": self.wder_identity,
            "mwde": self.mwde,
            "speaker_mapping": self.mapping.as_dict(),
        }


def score_pair(
    hyp: Conversation, ref: Conversation, mode: str, case_sensitive: bool = True
) -> ConversationScore:
    """All metrics for one hypothesis/reference conversation pair.

    Undefined rates (zero denominators) are reported as None, never 0 or 1.
    S_w and C_w in the counts are taken under the optimal (MWDE) mapping.
    """
    alignment, hyp_labels, ref_labels, unterminated = pool_conversations(
        hyp, ref, mode, case_sensitive
    )
    c, s, i, d = alignment.counts
    rate = wer(alignment) if s + c + d > 0 else None
    if s + c > 0:
        identity = SpeakerMapping.identity(hyp_labels, ref_labels)
        id_s_w, id_c_w = _wrong_counts(alignment, hyp_labels, ref_labels, identity)
        wder_identity = (id_s_w + id_c_w) / (s + c)
        min_rate, mapping = mwde(alignment, hyp_labels, ref_labels)
        s_w, c_w = _wrong_counts(alignment, hyp_labels, ref_labels, mapping)
    else:
        wder_identity = min_rate = None
        mapping = SpeakerMapping.empty()
        s_w = c_w = id_s_w = id_c_w = 0
    counts = {"C": c, "S": s, "I": i, "D": d, "S_w": s_w, "C_w": c_w}
    return ConversationScore(
        conversation_id=hyp.id,
        counts=counts,
        unterminated_utterances=unterminated,
        wer=rate,
        wder_identity=wder_identity,
        mwde=min_rate,
        mapping=mapping,
        identity_wrong=id_s_w + id_c_w,
    )


def _pooled_rate(num: int, den: int) -> float | None:
    return num / den if den > 0 else None


def _macro(values: list[float | None]) -> float | None:
    defined = [v for v in values if v is not None]
    return sum(defined) / len(defined) if defined else None


def score_corpus(
    hyp_conversations: Sequence[Conversation],
    ref_conversations: Sequence[Conversation],
    mode: str,
    normalize_mode: str = "rich",
    case_sensitive: bool = True,
) -> dict:
    """Machine-readable scoring report for paired corpora.

    Conversations pair by id; the corpus section reports both pooled counts
    and macro-averaged per-conversation rates, since either convention is
    defensible.
    """
    from .transcript import normalize

    ref_by_id = {conv.id: conv for conv in ref_conversations}
    hyp_ids = [conv.id for conv in hyp_conversations]
    if sorted(hyp_ids) != sorted(ref_by_id):
        raise ValidationError(
            f"hypothesis conversations {sorted(hyp_ids)} do not pair with "
            f"reference conversations {sorted(ref_by_id)}"
        )
    scores = []
    for hyp in hyp_conversations:
        hyp_n = normalize(hyp, normalize_mode)
        ref_n = normalize(ref_by_id[hyp.id], normalize_mode)
        scores.append(score_pair(hyp_n, ref_n, mode, case_sensitive))

    total = {"C": 0, "S": 0, "I": 0, "D": 0, "S_w": 0, "C_w": 0}
    for score in scores:
        for key in total:
            total[key] += score.counts[key]
    identity_total = sum(s.identity_wrong for s in scores)
    matched_total = total["C"] + total["S"]
    pooled = {
        "counts": total,
        "wer": _pooled_rate(total["S"] + total["I"] + total["D"],
                            total["S"] + total["C"] + total["D"]),
        "wder_identity": _pooled_rate(identity_total, matched_total),
        "mwde": _pooled_rate(total["S_w"] + total["C_w"], matched_total),
    }
    macro = {
        "wer": _macro([s.wer for s in scores]),
        "wder_identity": _macro([s.wder_identity for s in scores]),
        "mwde": _macro([s.mwde for s in scores]),
    }
    return {
        "schema_version": 1,
        "mode": mode,
        "normalize": normalize_mode,
        "case_sensitive": case_sensitive,
        "conversations": [s.to_record() for s in scores],
        "corpus": {"pooled": pooled, "macro": macro},
    }
