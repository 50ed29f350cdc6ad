"""Evaluation metrics, long-form decoding, and data augmentation for joint
transcription and speaker diarization of multi-speaker conversations."""

from .alignment import (
    AlignOp,
    OpKind,
    WordAlignment,
    align_words,
    strip_control_tokens,
    wer,
)
from .augment import (
    SegmentSpan,
    TrainingExample,
    WordAlignmentTrack,
    align_aug,
    sample_spans,
    shift_aug,
)
from .decoding import (
    AttentionSnapshot,
    DecoderSession,
    ModelInterface,
    RepetitionEvent,
    StrideEvent,
    StridingConfig,
    advance_window,
    attention_focus,
    decode_aligned,
    decode_greedy,
    decode_unaligned,
    detect_repetition,
    prune_repeats,
    should_advance,
)
from .diarize import (
    ClusterConfig,
    DiarizationSegments,
    FrameEmbeddings,
    cluster_speakers,
    extract_joint_speakers,
    reconcile_separate,
    sd_plus,
    utterance_embedding,
    word_embedding_from_af,
)
from .errors import (
    ContractError,
    ConvoscribeError,
    DataError,
    ModelContractError,
    OracleGuardError,
    ParseError,
    UndefinedRateError,
    ValidationError,
)
from .metrics import (
    DiarizedWords,
    SpeakerMapping,
    conversation_wer,
    mwde,
    mwde_bruteforce,
    score_corpus,
    score_pair,
    wder,
)
from .transcript import (
    US_TOKEN,
    UNKNOWN_SPEAKER,
    Conversation,
    Role,
    SpeakerId,
    TimeSpan,
    Utterance,
    WordToken,
    is_control_token,
    normalize,
    speaker_token,
    tokenize_words,
)
from .transcript_io import parse_conversation, parse_corpus, serialize_conversation, serialize_corpus

__version__ = "0.1.0"

__all__ = [
    "AlignOp", "AttentionSnapshot", "ClusterConfig", "ContractError",
    "Conversation", "ConvoscribeError", "DataError", "DecoderSession",
    "DiarizationSegments", "DiarizedWords", "FrameEmbeddings",
    "ModelContractError", "ModelInterface", "OpKind", "OracleGuardError",
    "ParseError", "RepetitionEvent", "Role", "SegmentSpan", "SpeakerId",
    "SpeakerMapping", "StrideEvent", "StridingConfig", "TimeSpan",
    "TrainingExample", "US_TOKEN", "UNKNOWN_SPEAKER", "UndefinedRateError",
    "Utterance", "ValidationError", "WordAlignment", "WordAlignmentTrack",
    "WordToken", "advance_window", "align_aug", "align_words",
    "attention_focus", "cluster_speakers", "conversation_wer",
    "decode_aligned", "decode_greedy", "decode_unaligned", "detect_repetition",
    "extract_joint_speakers", "is_control_token", "mwde", "mwde_bruteforce",
    "normalize", "parse_conversation", "parse_corpus", "prune_repeats",
    "reconcile_separate", "sample_spans", "score_corpus", "score_pair",
    "sd_plus", "serialize_conversation", "serialize_corpus", "shift_aug",
    "should_advance", "speaker_token", "strip_control_tokens",
    "tokenize_words", "utterance_embedding", "wder", "wer",
    "word_embedding_from_af",
]
