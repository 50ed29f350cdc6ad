"""Acceptance suite: one test per release criterion, at pinned tolerances.

Each test prints a single PASS line on success (run with ``pytest -s`` to see
them); a failure keeps the line absent and the test red.
"""

import time
from fractions import Fraction

import numpy as np
import pytest

from convoscribe import (
    AttentionSnapshot,
    FrameEmbeddings,
    RepetitionEvent,
    SpeakerId,
    SpeakerMapping,
    StridingConfig,
    TimeSpan,
    US_TOKEN,
    Utterance,
    WordAlignment,
    WordToken,
    align_words,
    attention_focus,
    conversation_wer,
    decode_aligned,
    decode_greedy,
    decode_unaligned,
    mwde,
    mwde_bruteforce,
    score_corpus,
    sd_plus,
    shift_aug,
    wder,
)
from convoscribe.alignment import correct
from convoscribe.augment import SegmentSpan, WordAlignmentTrack, align_aug
from convoscribe.oracle import RandomContextModel, ScriptedModel, TableModel, synthesize_features

from conftest import edit_distance_oracle, make_conversation, random_word_lists


def ok(name):
    print(f"PASS: {name}")


def random_instance(rng, max_speakers=6, max_words=40):
    hyp, ref = random_word_lists(rng, max_len=max_words)
    alignment = align_words(hyp, ref)
    n_h = int(rng.integers(1, max_speakers + 1))
    n_r = int(rng.integers(1, max_speakers + 1))
    hyp_speakers = [f"h{int(k)}" for k in rng.integers(0, n_h, len(hyp))]
    ref_speakers = [f"r{int(k)}" for k in rng.integers(0, n_r, len(ref))]
    return alignment, hyp_speakers, ref_speakers


def test_mwde_oracle_equivalence():
    rng = np.random.default_rng(2024)
    started = time.monotonic()
    for _ in range(1000):
        alignment, hyp_speakers, ref_speakers = random_instance(rng)
        fast, _ = mwde(alignment, hyp_speakers, ref_speakers)
        slow, _ = mwde_bruteforce(alignment, hyp_speakers, ref_speakers)
        assert fast == slow
    elapsed = time.monotonic() - started
    assert elapsed < 10.0, f"took {elapsed:.2f}s"
    ok(f"MWDE equals brute-force oracle on 1000 instances ({elapsed:.2f}s)")


def test_mwde_relabeling_invariance():
    rng = np.random.default_rng(7)
    for _ in range(200):
        alignment, hyp_speakers, ref_speakers = random_instance(rng)
        base, _ = mwde(alignment, hyp_speakers, ref_speakers)
        hyp_ids = sorted(set(hyp_speakers))
        ref_ids = sorted(set(ref_speakers))
        for _ in range(20):
            hyp_names = [f"H{i}" for i in rng.permutation(len(hyp_ids))]
            ref_names = [f"R{i}" for i in rng.permutation(len(ref_ids))]
            hyp_map = dict(zip(hyp_ids, hyp_names))
            ref_map = dict(zip(ref_ids, ref_names))
            relabeled, _ = mwde(
                alignment,
                [hyp_map[s] for s in hyp_speakers],
                [ref_map[s] for s in ref_speakers],
            )
            assert relabeled == base
    ok("MWDE invariant under 200x20 bijective relabelings")


def test_mwde_lower_bound_and_empty_mapping():
    rng = np.random.default_rng(99)
    for _ in range(300):
        alignment, hyp_speakers, ref_speakers = random_instance(rng)
        rate, _ = mwde(alignment, hyp_speakers, ref_speakers)
        assert wder(alignment, hyp_speakers, ref_speakers, SpeakerMapping.empty()) == 1.0
        hyp_ids = sorted(set(hyp_speakers))
        ref_ids = sorted(set(ref_speakers))
        for _ in range(5):
            size = int(rng.integers(0, min(len(hyp_ids), len(ref_ids)) + 1))
            mapping = SpeakerMapping(
                tuple(zip(rng.permutation(hyp_ids)[:size], rng.permutation(ref_ids)[:size]))
            )
            assert rate <= wder(alignment, hyp_speakers, ref_speakers, mapping)
    ok("MWDE <= WDER(any mapping); empty-mapping WDER is 1.0")


def test_edit_distance_oracle():
    rng = np.random.default_rng(5150)
    started = time.monotonic()
    for _ in range(10_000):
        hyp, ref = random_word_lists(rng, max_len=50)
        assert align_words(hyp, ref).edit_cost == edit_distance_oracle(hyp, ref)
    elapsed = time.monotonic() - started
    assert elapsed < 30.0, f"took {elapsed:.2f}s"
    ok(f"alignment cost equals DP oracle on 10000 fuzzed pairs ({elapsed:.2f}s)")


def test_unterminated_hundred_percent_rule():
    def fixture(k, n, words_per_utt=10):
        ref = make_conversation(
            [(" ".join(f"u{u}w{i}" for i in range(words_per_utt)), "A") for u in range(n)]
        )
        hyp = make_conversation(
            [
                (
                    " ".join(f"u{u}w{i}" for i in range(words_per_utt)),
                    "A",
                    {"terminated": u >= k},
                )
                for u in range(n)
            ]
        )
        return hyp, ref

    hyp, ref = fixture(k=1, n=10)
    rate = conversation_wer(hyp, ref, "aligned")
    assert abs(rate - 0.10) < 1e-12
    hyp, ref = fixture(k=3, n=10)
    assert abs(conversation_wer(hyp, ref, "aligned") - 0.30) < 1e-12
    ok("unterminated utterances score exactly 100% WER, pooled")


THREE_UTTERANCE_SCRIPT = [
    ("good", 100), ("morning", 400), ("[Alice]", 900), ("[US]", 1000),
    ("hi", 1300), ("there", 1800), ("friends", 2300), ("[Bob]", 2500), ("[US]", 2600),
    ("welcome", 3000), ("back", 3600), ("again", 4300), ("[Alice]", 4700), ("[US]", 4990),
]


def test_striding_decoder_reconstruction():
    started = time.monotonic()
    model = ScriptedModel(THREE_UTTERANCE_SCRIPT, num_frames=5000)
    events = []
    conv = decode_unaligned(
        model, synthesize_features(5000), None, StridingConfig(), events=events
    )
    elapsed = time.monotonic() - started
    emitted = [w.text for u in conv.utterances for w in u.words]
    scripted_words = [
        t for t, _ in THREE_UTTERANCE_SCRIPT if t not in ("[Alice]", "[Bob]", US_TOKEN)
    ]
    assert emitted == scripted_words, "tokens must be committed exactly once, in order"
    assert [u.speaker.id for u in conv.utterances] == ["Alice", "Bob", "Alice"]
    assert all(u.terminated for u in conv.utterances)
    assert any(getattr(e, "new_start", 0) for e in events), "expected window strides"
    assert elapsed < 1.0, f"took {elapsed:.2f}s"
    ok(f"striding decoder reconstructs the scripted episode exactly ({elapsed:.3f}s)")


def test_repetition_recovery():
    script = [
        ("good", 100), ("morning", 400), ("[Alice]", 900), ("[US]", 1000),
        ("la", 1400), ("la", 1450),
        ("back", 3600), ("again", 4300), ("[Alice]", 4700), ("[US]", 4800),
    ]
    model = ScriptedModel(script, num_frames=5000, loops=[(4, 6, 12)])
    config = StridingConfig()
    events = []
    conv = decode_unaligned(model, synthesize_features(5000), None, config, events=events)
    repetition_events = [e for e in events if isinstance(e, RepetitionEvent)]
    assert len(repetition_events) >= 1
    tokens = [w.text for u in conv.utterances for w in u.words]
    for n in range(1, config.max_ngram + 1):
        for i in range(len(tokens)):
            gram = tokens[i : i + n]
            if not gram:
                continue
            k = 1
            while tokens[i + n * k : i + n * (k + 1)] == gram:
                k += 1
            assert k < config.repeat_threshold, f"{gram} repeats {k} times"
    ok("adversarial loop region: terminated, event emitted, no banned runs")


def test_beam_one_equals_greedy_and_beam_five_equals_exhaustive():
    for seed in range(100):
        model = RandomContextModel(seed, ["a", "b", "c"])
        config = StridingConfig(beam_size=1, max_output_tokens=12)
        greedy = decode_greedy(model, synthesize_features(4), config)
        beam = decode_aligned(model, synthesize_features(4), config)
        assert greedy == beam, f"seed {seed} diverged"

    vocab = ["a", "b", "c", US_TOKEN]
    model = TableModel(
        vocab,
        {
            (): [0.40, 0.35, 0.20, 0.05],
            ("a",): [0.30, 0.30, 0.30, 0.10],
            ("b",): [0.02, 0.02, 0.06, 0.90],
            ("a", "a"): [0.20, 0.20, 0.10, 0.50],
        },
    )
    max_len = 6
    features = synthesize_features(4)
    best = (None, -np.inf)

    def expand(prefix, score):
        nonlocal best
        if len(prefix) >= max_len:
            return
        dist, _ = model.step(features, prefix)
        with np.errstate(divide="ignore"):
            logs = np.log(np.asarray(dist, dtype=np.float64))
        for idx, token in enumerate(vocab):
            seq_score = score + float(logs[idx])
            if token == US_TOKEN:
                if seq_score > best[1]:
                    best = (prefix + (token,), seq_score)
            else:
                expand(prefix + (token,), seq_score)

    expand((), 0.0)
    config = StridingConfig(beam_size=5, max_output_tokens=max_len)
    utterance = decode_aligned(model, features, config)
    assert utterance.terminated
    assert utterance.texts == best[0][:-1]
    ok("beam-1 == greedy on 100 random models; beam-5 == exhaustive search")


def test_shift_and_align_aug_proportionality():
    rng = np.random.default_rng(31337)

    def rational_kept(utt_start, utt_end, s, e, n):
        us, ue = Fraction(utt_start), Fraction(utt_end)
        fs, fe = Fraction(s), Fraction(e)
        if fs <= us and ue <= fe:
            return n
        lo, hi = max(us, fs), min(ue, fe)
        if hi <= lo:
            return 0
        return int((hi - lo) / (ue - us) * n + Fraction(1, 2))

    for _ in range(1000):
        utt_start = float(rng.uniform(0, 100))
        utt_len = float(rng.uniform(0.5, 40))
        n_words = int(rng.integers(1, 40))
        conv = make_conversation(
            [(" ".join(f"w{i}" for i in range(n_words)), "A",
              {"start": utt_start, "end": utt_start + utt_len})]
        )
        s = float(rng.uniform(0, 130))
        span = SegmentSpan(TimeSpan(s, s + float(rng.uniform(10, 30))))
        example = shift_aug(conv, span)
        kept = sum(hi - lo for _, lo, hi in example.provenance)
        assert kept == rational_kept(
            utt_start, utt_start + utt_len, span.span.start, span.span.end, n_words
        )

    for _ in range(300):
        n_words = int(rng.integers(1, 20))
        utt_start = float(rng.uniform(0, 50))
        utt_len = float(rng.uniform(1, 30))
        conv = make_conversation(
            [(" ".join(f"w{i}" for i in range(n_words)), "A",
              {"start": utt_start, "end": utt_start + utt_len})]
        )
        step = utt_len / n_words
        track = WordAlignmentTrack(
            {0: tuple(TimeSpan(utt_start + i * step, utt_start + (i + 1) * step)
                      for i in range(n_words))}
        )
        s = float(rng.uniform(0, 70))
        span = SegmentSpan(TimeSpan(s, s + float(rng.uniform(10, 30))))
        example = align_aug(conv, span, track)
        kept = {w for _, lo, hi in example.provenance for w in range(lo, hi)}
        expected = {
            i for i, ws in enumerate(track.spans[0])
            if span.span.start <= ws.start and ws.end <= span.span.end
        }
        assert kept == expected
    ok("ShiftAug keeps round(f*n) exactly (1000x); AlignAug matches containment oracle")


def test_attention_focus_analytic_cases():
    weights = np.zeros((3, 2, 64))
    weights[:, :, 17] = 1.0
    assert attention_focus(AttentionSnapshot(weights), 1000) == 1017.0

    for L in (1, 2, 7, 64, 501):
        snapshot = AttentionSnapshot(np.full((2, 2, L), 1.0 / L))
        assert attention_focus(snapshot, 0) == pytest.approx((L - 1) / 2, abs=1e-9)

    rng = np.random.default_rng(404)
    for _ in range(100):
        a = rng.random((2, 4, 32))
        a /= a.sum(axis=2, keepdims=True)
        b = rng.random((2, 4, 32))
        b /= b.sum(axis=2, keepdims=True)
        lhs = attention_focus(AttentionSnapshot((a + b) / 2), 3)
        rhs = (attention_focus(AttentionSnapshot(a), 3) + attention_focus(AttentionSnapshot(b), 3)) / 2
        assert lhs == pytest.approx(rhs, abs=1e-9)
    ok("attention focus: one-hot exact, uniform (L-1)/2, linear within 1e-9")


def test_sd_plus_clustering_sanity():
    rng = np.random.default_rng(808)
    spread = 0.5
    separation = 10 * spread
    means = {"A": np.array([0.0, 0.0, 0.0]), "B": np.array([separation, 0.0, 0.0])}
    utterances = []
    attention = []
    frames_rows = []
    truth = []
    frame = 0
    window = 120
    for u in range(40):
        speaker = "A" if u % 2 == 0 else "B"
        words = tuple(WordToken(f"u{u}w{i}") for i in range(3))
        utterances.append(Utterance(SpeakerId(f"J{u}"), words, TimeSpan(0.0, 0.0)))
        word_atts = []
        for _ in words:
            frames_rows.append(means[speaker] + rng.normal(0.0, spread, 3))
            weights = np.zeros((2, 2, window))
            weights[:, :, frame] = 1.0
            word_atts.append((AttentionSnapshot(weights), 0))
            frame += 1
        attention.append(word_atts)
        truth.extend([speaker] * len(words))
    frames = FrameEmbeddings(np.asarray(frames_rows), 100.0)
    out = sd_plus(utterances, frames, attention)
    alignment = WordAlignment(
        tuple(correct(i, i) for i in range(len(out.words))), len(out.words), len(out.words)
    )
    rate, _ = mwde(alignment, out.labels, truth)
    assert rate == 0.0
    ok("sd_plus separates 10x-spread synthetic speakers: MWDE 0.0")


def test_performance_mwde_and_hourscale_scoring():
    rng = np.random.default_rng(60601)
    n = 100_000
    ops = tuple(correct(i, i) for i in range(n))
    alignment = WordAlignment(ops, n, n)
    hyp_speakers = [f"h{int(k)}" for k in rng.integers(0, 18, n)]
    ref_speakers = [f"r{int(k)}" for k in rng.integers(0, 18, n)]
    started = time.monotonic()
    rate, _ = mwde(alignment, hyp_speakers, ref_speakers)
    mwde_elapsed = time.monotonic() - started
    assert 0.0 <= rate <= 1.0
    assert mwde_elapsed < 5.0, f"mwde took {mwde_elapsed:.2f}s"

    # Synthetic 58-minute episode: 247 turns, 18 speakers, ~45 words each.
    speakers = [f"spk{i}" for i in range(18)]
    ref_specs = []
    hyp_specs = []
    t = 0.0
    vocab = [f"word{i}" for i in range(500)]
    for u in range(247):
        n_words = int(rng.integers(35, 56))
        words = [vocab[int(k)] for k in rng.integers(0, len(vocab), n_words)]
        speaker = speakers[int(rng.integers(0, 18))]
        duration = n_words / 3.0
        ref_specs.append((" ".join(words), speaker, {"start": t, "end": t + duration}))
        noisy = []
        for w in words:
            r = rng.random()
            if r < 0.06:
                noisy.append(vocab[int(rng.integers(0, len(vocab)))])
            elif r < 0.09:
                continue
            else:
                noisy.append(w)
            if rng.random() < 0.02:
                noisy.append(vocab[int(rng.integers(0, len(vocab)))])
        hyp_speaker = speaker if rng.random() > 0.1 else speakers[int(rng.integers(0, 18))]
        hyp_specs.append((" ".join(noisy), hyp_speaker, {"start": t, "end": t + duration}))
        t += duration + 0.5
    ref = make_conversation(ref_specs, conv_id="hour")
    hyp = make_conversation(hyp_specs, conv_id="hour")
    started = time.monotonic()
    report = score_corpus([hyp], [ref], "unaligned")
    scoring_elapsed = time.monotonic() - started
    assert report["corpus"]["pooled"]["wer"] is not None
    assert scoring_elapsed < 30.0, f"scoring took {scoring_elapsed:.2f}s"
    ok(
        f"performance: 100k-word/18-speaker MWDE {mwde_elapsed:.2f}s; "
        f"hour-scale unaligned scoring {scoring_elapsed:.2f}s"
    )
