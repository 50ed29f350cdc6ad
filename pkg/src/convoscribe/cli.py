"""Command-line entry point.

Subcommands: ``score`` (metrics report for a hypothesis/reference pair),
``decode`` (run an oracle model through the striding or beam decoder),
``augment`` (emit a training-example manifest), and ``reconcile`` (produce
word-level speaker labels). A JSON config file can preset any option; flags
override file values. Exit codes: 0 success, 2 validation error, 3 model
contract error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import augment as aug
from . import decoding, diarize, features, metrics, oracle, transcript, transcript_io, vad
from .errors import (
    ConvoscribeError,
    ModelContractError,
    ParseError,
    UndefinedRateError,
    ValidationError,
)

logger = logging.getLogger("convoscribe")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CONTRACT = 3
EXIT_IO = 4


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        config = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", exc.lineno) from exc
    if not isinstance(config, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    return config


def _merge_config(args: argparse.Namespace, file_config: dict, known: set[str]) -> dict:
    unknown = set(file_config) - known
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    merged = dict(file_config)
    for key in known:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _write_json(payload: dict, path: str | None) -> None:
    text = json.dumps(payload, indent=2, ensure_ascii=False, sort_keys=True)
    if path is None or path == "-":
        print(text)
    else:
        Path(path).write_text(text + "\n", encoding="utf-8")


def cmd_score(args: argparse.Namespace) -> int:
    hyp = transcript_io.parse_corpus(args.hyp)
    ref = transcript_io.parse_corpus(args.ref)
    report = metrics.score_corpus(
        hyp, ref, mode=args.mode, normalize_mode=args.normalize,
        case_sensitive=not args.case_insensitive,
    )
    _write_json(report, args.output)
    return EXIT_OK


_STRIDING_KEYS = {
    "advance_fraction", "stride_fraction", "max_ngram", "repeat_threshold",
    "af_stall_window", "af_stall_epsilon", "end_margin_frames", "beam_size",
    "frame_rate", "window_seconds", "max_output_tokens", "max_steps_per_frame",
}


def cmd_decode(args: argparse.Namespace) -> int:
    file_config = _load_config(args.config)
    conversation_id = file_config.pop("conversation_id", "decoded")
    merged = _merge_config(args, file_config, _STRIDING_KEYS)
    config = decoding.StridingConfig(**merged)

    frames, frame_rate = features.read_features(args.features)
    if abs(frame_rate - config.frame_rate) > 1e-9:
        logger.info("using the feature file's frame rate (%g frames/s)", frame_rate)
        config = decoding.StridingConfig(**{**merged, "frame_rate": frame_rate})
    model = oracle.load_oracle(args.model)

    if args.mode == "unaligned":
        segments = vad.parse_vad_segments(args.vad) if args.vad else None
        events: list = []
        conversation = decoding.decode_unaligned(
            model, frames, segments, config, conversation_id=conversation_id, events=events
        )
        for event in events:
            logger.info("%s", event)
    else:
        utterance = decoding.decode_aligned(model, frames, config)
        conversation = transcript.Conversation(conversation_id, (utterance,))
    transcript_io.serialize_conversation(conversation, args.output)
    return EXIT_OK


def cmd_augment(args: argparse.Namespace) -> int:
    conversations = transcript_io.parse_corpus(args.transcript)
    if args.mode == "align" and args.alignments is None:
        raise ValidationError("align mode requires --alignments")
    track = aug.parse_alignment_track(args.alignments) if args.alignments else None
    if args.mode == "align" and len(conversations) != 1:
        raise ValidationError("align mode expects a single-conversation transcript")
    examples = []
    for conv_idx, conversation in enumerate(conversations):
        if track is not None:
            track.validate_against(conversation)
        spans = aug.sample_spans(conversation, args.count, [args.seed, conv_idx])
        for span in spans:
            if args.mode == "shift":
                examples.append(aug.shift_aug(conversation, span))
            else:
                examples.append(aug.align_aug(conversation, span, track))
    aug.write_manifest(examples, args.output)
    return EXIT_OK


def _words_with_interpolated_spans(conversation: transcript.Conversation):
    """Give each word a span by slicing its utterance span uniformly."""
    words = []
    for utterance in conversation.utterances:
        n = len(utterance.words)
        if n == 0:
            continue
        start, total = utterance.span.start, utterance.span.duration
        step = total / n
        for i, word in enumerate(utterance.words):
            span = transcript.TimeSpan(start + i * step, start + (i + 1) * step)
            words.append(transcript.WordToken(word.text, span))
    return words


def _diarized_to_conversation(
    diarized: metrics.DiarizedWords, conversation_id: str, duration: float
) -> transcript.Conversation:
    """Group labelled words into utterances at speaker changes."""
    utterances = []
    run_words: list[transcript.WordToken] = []
    run_speaker: transcript.SpeakerId | None = None
    floor = 0.0

    def flush():
        nonlocal run_words, floor
        if not run_words:
            return
        spans = [w.span for w in run_words if w.span is not None]
        start = min(s.start for s in spans) if spans else floor
        end = max(s.end for s in spans) if spans else floor
        start = max(start, floor)
        end = max(end, start)
        floor = start
        words = tuple(transcript.WordToken(w.text) for w in run_words)
        utterances.append(
            transcript.Utterance(run_speaker, words, transcript.TimeSpan(start, end))
        )
        run_words = []

    for word, speaker in zip(diarized.words, diarized.speakers):
        if run_speaker is None or speaker.id != run_speaker.id:
            flush()
            run_speaker = speaker
        run_words.append(word)
    flush()
    return transcript.Conversation(conversation_id, tuple(utterances), duration)


def cmd_reconcile(args: argparse.Namespace) -> int:
    conversation = transcript_io.parse_conversation(args.transcript)
    if args.strategy == "separate":
        if args.segments is None:
            raise ValidationError("separate strategy requires --segments")
        segments = diarize.parse_diarization_segments(args.segments)
        words = _words_with_interpolated_spans(conversation)
        diarized = diarize.reconcile_separate(words, segments)
    elif args.strategy == "joint":
        tokens: list[str] = []
        token_spans: list[transcript.TimeSpan] = []
        for utterance in conversation.utterances:
            for word in utterance.words:
                tokens.append(word.text)
                token_spans.append(word.span or utterance.span)
        words, speakers = [], []
        for segment in transcript.split_joint_stream(tokens):
            speaker = segment.speaker or transcript.SpeakerId(transcript.UNKNOWN_SPEAKER)
            for text, pos in zip(segment.words, segment.word_positions):
                words.append(transcript.WordToken(text, token_spans[pos]))
                speakers.append(speaker)
        diarized = metrics.DiarizedWords(tuple(words), tuple(speakers))
    else:  # sd-plus
        if args.embeddings is None:
            raise ValidationError("sd-plus strategy requires --embeddings")
        matrix, frame_rate = features.read_features(args.embeddings)
        frames = diarize.FrameEmbeddings(matrix, frame_rate)
        labelled = [u for u in conversation.utterances if u.words]
        embeddings = [diarize.embedding_for_span(frames, u.span) for u in labelled]
        labels = diarize.cluster_speakers(embeddings) if embeddings else []
        words, speakers = [], []
        for utterance, label in zip(labelled, labels):
            speaker = transcript.SpeakerId(f"spk{label}")
            for word in utterance.words:
                words.append(transcript.WordToken(word.text, word.span or utterance.span))
                speakers.append(speaker)
        diarized = metrics.DiarizedWords(tuple(words), tuple(speakers))

    out = _diarized_to_conversation(diarized, conversation.id, conversation.duration)
    transcript_io.serialize_conversation(out, args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convoscribe",
        description="Metrics, long-form decoding, and augmentation for "
        "joint transcription and diarization",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log debug detail")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="score a hypothesis corpus against a reference")
    p.add_argument("hyp", help="hypothesis transcript (JSONL or CSV)")
    p.add_argument("ref", help="reference transcript (JSONL or CSV)")
    p.add_argument("--mode", choices=("aligned", "unaligned"), default="aligned")
    p.add_argument("--normalize", choices=("rich", "simulated"), default="rich")
    p.add_argument("--case-insensitive", action="store_true",
                   help="compare words ignoring case")
    p.add_argument("-o", "--output", default=None, help="report path (default stdout)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("decode", help="decode features through an oracle model")
    p.add_argument("features", help="feature matrix file")
    p.add_argument("model", help="oracle model description (JSON)")
    p.add_argument("--vad", default=None, help="VAD segments file ('start end' lines)")
    p.add_argument("--config", default=None, help="JSON config for striding parameters")
    p.add_argument("--mode", choices=("aligned", "unaligned"), default="unaligned")
    p.add_argument("-o", "--output", required=True, help="transcript output path")
    for key in sorted(_STRIDING_KEYS):
        flag = "--" + key.replace("_", "-")
        if key in ("max_ngram", "repeat_threshold", "af_stall_window", "beam_size",
                   "max_output_tokens"):
            p.add_argument(flag, type=int, default=None)
        else:
            p.add_argument(flag, type=float, default=None)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("augment", help="emit a training-example manifest")
    p.add_argument("transcript", help="transcript file")
    p.add_argument("--mode", choices=("shift", "align"), default="shift")
    p.add_argument("--alignments", default=None, help="forced word alignment track")
    p.add_argument("--count", type=int, default=10, help="spans per conversation")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True, help="manifest output path")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("reconcile", help="produce word-level speaker labels")
    p.add_argument("transcript", help="ASR transcript file")
    p.add_argument("--strategy", choices=("separate", "joint", "sd-plus"), required=True)
    p.add_argument("--segments", default=None, help="diarization segments file")
    p.add_argument("--embeddings", default=None, help="frame embedding matrix file")
    p.add_argument("-o", "--output", required=True, help="diarized transcript path")
    p.set_defaults(func=cmd_reconcile)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ModelContractError as exc:
        logger.error("model contract violation: %s", exc)
        return EXIT_CONTRACT
    except (ParseError, ValidationError, UndefinedRateError, ConvoscribeError) as exc:
        logger.error("%s", exc)
        return EXIT_VALIDATION
    except OSError as exc:
        logger.error("%s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
