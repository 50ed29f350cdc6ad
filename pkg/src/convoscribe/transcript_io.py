"""Transcript interchange format: JSON-lines (normative) plus a CSV alias.

One utterance per line/row with fields ``conversation_id``,
``utterance_index``, ``speaker_id``, ``role`` (optional), ``start``, ``end``,
``text`` and the optional ``terminated`` flag (default true). ``text`` holds
the utterance's tokens joined by single spaces; parsing splits on whitespace,
so pre-tokenized content round-trips losslessly. Use
:func:`convoscribe.transcript.tokenize_words` when building records from raw
prose.
"""

from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path

from .errors import ParseError, ValidationError
from .transcript import Conversation, Role, SpeakerId, TimeSpan, Utterance, WordToken

_REQUIRED_FIELDS = ("conversation_id", "utterance_index", "speaker_id", "start", "end", "text")


def _utterance_from_record(record: dict, line: int) -> tuple[str, int, Utterance]:
    for name in _REQUIRED_FIELDS:
        if name not in record or record[name] is None:
            raise ParseError(f"missing field {name!r}", line)
    try:
        conv_id = str(record["conversation_id"])
        index = int(record["utterance_index"])
        start = float(record["start"])
        end = float(record["end"])
        text = str(record["text"])
        speaker_id = str(record["speaker_id"])
        role_raw = record.get("role")
        role = Role(role_raw) if role_raw not in (None, "") else None
        terminated_raw = record.get("terminated")
        if terminated_raw in (None, ""):
            terminated = True
        elif isinstance(terminated_raw, bool):
            terminated = terminated_raw
        else:
            terminated = str(terminated_raw).strip().lower() in ("true", "1", "yes")
    except (TypeError, ValueError) as exc:
        raise ParseError(str(exc), line) from exc
    words = tuple(WordToken(t) for t in text.split())
    utterance = Utterance(
        speaker=SpeakerId(speaker_id, role),
        words=words,
        span=TimeSpan(start, end),
        terminated=terminated,
    )
    return conv_id, index, utterance


def _build_conversations(
    rows: list[tuple[str, int, Utterance]],
) -> list[Conversation]:
    grouped: dict[str, list[tuple[int, Utterance]]] = {}
    for conv_id, index, utt in rows:
        grouped.setdefault(conv_id, []).append((index, utt))
    conversations = []
    for conv_id, entries in grouped.items():
        last_index = None
        for pos, (index, _) in enumerate(entries):
            if last_index is not None and index <= last_index:
                raise ValidationError(
                    f"conversation {conv_id!r}: utterance index {index} at position {pos} "
                    f"does not increase (previous {last_index})"
                )
            last_index = index
        try:
            conversations.append(Conversation(conv_id, tuple(u for _, u in entries)))
        except ValidationError as exc:
            raise ValidationError(f"conversation {conv_id!r}: {exc}") from exc
    return conversations


def _parse_jsonl(text: str) -> list[Conversation]:
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", lineno) from exc
        if not isinstance(record, dict):
            raise ParseError("record is not a JSON object", lineno)
        try:
            rows.append(_utterance_from_record(record, lineno))
        except ValidationError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from exc
    return _build_conversations(rows)


def _parse_csv(text: str) -> list[Conversation]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        return _build_conversations([])
    missing = [f for f in _REQUIRED_FIELDS if f not in reader.fieldnames]
    if missing:
        raise ParseError(f"CSV header missing fields {missing}", 1)
    rows = []
    for lineno, record in enumerate(reader, start=2):
        try:
            rows.append(_utterance_from_record(record, lineno))
        except ValidationError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from exc
    return _build_conversations(rows)


def parse_corpus(path: str | os.PathLike) -> list[Conversation]:
    """Parse every conversation in a transcript file, ordered by first appearance."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".csv":
        return _parse_csv(text)
    return _parse_jsonl(text)


def parse_conversation(path: str | os.PathLike) -> Conversation:
    """Parse a transcript file expected to hold exactly one conversation."""
    conversations = parse_corpus(path)
    if len(conversations) != 1:
        raise ValidationError(
            f"{path}: expected exactly one conversation, found {len(conversations)}"
        )
    return conversations[0]


def conversation_records(conversation: Conversation) -> list[dict]:
    records = []
    for index, utt in enumerate(conversation.utterances):
        record = {
            "conversation_id": conversation.id,
            "utterance_index": index,
            "speaker_id": utt.speaker.id,
            "role": utt.speaker.role.value if utt.speaker.role else None,
            "start": utt.span.start,
            "end": utt.span.end,
            "text": utt.text,
            "terminated": utt.terminated,
        }
        records.append(record)
    return records


def serialize_corpus(conversations: list[Conversation], path: str | os.PathLike) -> None:
    """Write conversations as JSON-lines; output re-parses to an equal corpus."""
    lines = []
    for conversation in conversations:
        for record in conversation_records(conversation):
            lines.append(json.dumps(record, ensure_ascii=False, sort_keys=True))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def serialize_conversation(conversation: Conversation, path: str | os.PathLike) -> None:
    serialize_corpus([conversation], path)
