import numpy as np
import pytest

from convoscribe import Conversation, SpeakerId, TimeSpan, Utterance, WordToken


def make_utterance(text, speaker="A", start=0.0, end=1.0, terminated=True, role=None):
    words = tuple(WordToken(t) for t in text.split())
    return Utterance(
        speaker=SpeakerId(speaker, role),
        words=words,
        span=TimeSpan(start, end),
        terminated=terminated,
    )


def make_conversation(utterance_specs, conv_id="conv"):
    """Build a conversation from (text, speaker) or (text, speaker, kwargs) specs."""
    utterances = []
    for i, spec in enumerate(utterance_specs):
        text, speaker = spec[0], spec[1]
        kwargs = spec[2] if len(spec) > 2 else {}
        kwargs.setdefault("start", float(i))
        kwargs.setdefault("end", float(i) + 1.0)
        utterances.append(make_utterance(text, speaker, **kwargs))
    return Conversation(conv_id, tuple(utterances))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_word_lists(rng, max_len=40, vocab_size=6):
    vocab = [f"w{i}" for i in range(vocab_size)]
    n = int(rng.integers(1, max_len + 1))
    m = int(rng.integers(1, max_len + 1))
    hyp = [vocab[int(k)] for k in rng.integers(0, vocab_size, n)]
    ref = [vocab[int(k)] for k in rng.integers(0, vocab_size, m)]
    return hyp, ref


def edit_distance_oracle(hyp, ref):
    """Independent quadratic DP for Levenshtein distance over token lists."""
    n, m = len(hyp), len(ref)
    prev = list(range(m + 1))
    for i in range(1, n + 1):
        cur = [i] + [0] * m
        for j in range(1, m + 1):
            cost = 0 if hyp[i - 1] == ref[j - 1] else 1
            cur[j] = min(prev[j - 1] + cost, prev[j] + 1, cur[j - 1] + 1)
        prev = cur
    return prev[m]
