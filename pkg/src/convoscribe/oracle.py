"""Synthetic models implementing the decoding contract for tests and demos.

A scripted model replays a declarative emission script (token sequence with
per-token target frames, plus optional loop regions that simulate a model
stuck on unintelligible audio). Loop passes after the first pin the target
frame so the attention focus genuinely stalls. Scripted models read the
current window position out of channel 0 of the feature matrix, which
:func:`synthesize_features` encodes as each frame's own index; they are
therefore only meaningful for greedy decoding, where exactly one step runs
per emitted token.

Table and random models are pure functions of the decoded context, suitable
for beam search.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .decoding import AttentionSnapshot, ModelInterface
from .transcript import US_TOKEN


def synthesize_features(num_frames: int, dim: int = 8) -> np.ndarray:
    """Feature matrix whose channel 0 carries the frame's own index."""
    if dim < 1:
        raise ValidationError("feature dim must be at least 1")
    frames = np.zeros((num_frames, dim), dtype=np.float64)
    frames[:, 0] = np.arange(num_frames)
    return frames


def reindex_speech_frames(frames: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Rewrite channel 0 so kept frames carry their post-excision rank.

    Lets scripted models address post-VAD frame positions when the full
    episode matrix still contains the non-speech frames to be excised.
    """
    frames = np.array(frames, dtype=np.float64)
    frames[keep, 0] = np.arange(len(keep))
    return frames


def _one_hot(size: int, index: int) -> np.ndarray:
    row = np.zeros(size, dtype=np.float64)
    row[index] = 1.0
    return row


class ScriptedModel(ModelInterface):
    """Replays a fixed emission list; stateful, one emission per step."""

    def __init__(
        self,
        tokens: list[tuple[str, int]],
        num_frames: int,
        loops: list[tuple[int, int, int]] | None = None,
        layers: int = 2,
        heads: int = 2,
        extra_vocab: tuple[str, ...] = (),
    ):
        if num_frames < 1:
            raise ValidationError("scripted model needs at least one frame")
        self.num_frames = num_frames
        self.layers = layers
        self.heads = heads
        entries = [(str(t), int(f)) for t, f in tokens]
        for token, frame in entries:
            if not 0 <= frame < num_frames:
                raise ValidationError(f"target frame {frame} for {token!r} is out of range")
        self.emissions = self._expand(entries, loops or [])
        names = sorted({t for t, _ in entries} | {US_TOKEN} | set(extra_vocab))
        self._vocab = names
        self._index = {t: i for i, t in enumerate(names)}
        self.cursor = 0

    @staticmethod
    def _expand(entries, loops):
        emissions = []
        position = 0
        for start, end, repeats in sorted(loops):
            if not (0 <= start < end <= len(entries)) or repeats < 1:
                raise ValidationError(f"invalid loop region ({start}, {end}, {repeats})")
            if start < position:
                raise ValidationError("loop regions overlap")
            emissions.extend(entries[position:start])
            body = entries[start:end]
            emissions.extend(body)
            pinned = body[-1][1]
            for _ in range(repeats - 1):
                emissions.extend((token, pinned) for token, _ in body)
            position = end
        emissions.extend(entries[position:])
        return emissions

    @property
    def vocab(self):
        return self._vocab

    def reset(self) -> None:
        self.cursor = 0

    def step(self, feature_window, context):
        window = np.asarray(feature_window, dtype=np.float64)
        window_start = int(round(window[0, 0]))
        if self.cursor < len(self.emissions):
            token, frame = self.emissions[self.cursor]
        else:
            token, frame = US_TOKEN, self.num_frames - 1
        self.cursor += 1
        rel = int(np.clip(frame - window_start, 0, len(window) - 1))
        weights = np.zeros((self.layers, self.heads, len(window)), dtype=np.float64)
        weights[:, :, rel] = 1.0
        return _one_hot(len(self._vocab), self._index[token]), AttentionSnapshot(weights)


class TableModel(ModelInterface):
    """Distribution looked up by exact decoded context; pure and beam-safe."""

    def __init__(self, vocab, table: dict, default=None):
        self._vocab = list(vocab)
        self._table = {}
        for key, dist in table.items():
            key_tuple = tuple(key.split()) if isinstance(key, str) else tuple(key)
            self._table[key_tuple] = np.asarray(dist, dtype=np.float64)
        if default is None:
            default = np.full(len(self._vocab), 1.0 / len(self._vocab))
        self._default = np.asarray(default, dtype=np.float64)

    @property
    def vocab(self):
        return self._vocab

    def step(self, feature_window, context):
        dist = self._table.get(tuple(context), self._default)
        window = np.atleast_2d(np.asarray(feature_window, dtype=np.float64))
        weights = np.full((1, 1, len(window)), 1.0 / len(window))
        return dist, AttentionSnapshot(weights)


class RandomContextModel(ModelInterface):
    """Deterministic pseudo-random distribution per (seed, context)."""

    def __init__(self, seed: int, vocab, us_floor: float = 0.05):
        self.seed = int(seed)
        self._vocab = list(vocab)
        if US_TOKEN not in self._vocab:
            self._vocab.append(US_TOKEN)
        self.us_floor = us_floor

    @property
    def vocab(self):
        return self._vocab

    def step(self, feature_window, context):
        digest = hashlib.sha256(
            ("\x1f".join(context) + f"|{self.seed}").encode("utf-8")
        ).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        probs = rng.random(len(self._vocab)) + 1e-6
        us_idx = self._vocab.index(US_TOKEN)
        probs[us_idx] += self.us_floor * len(context)
        probs /= probs.sum()
        window = np.atleast_2d(np.asarray(feature_window, dtype=np.float64))
        weights = np.full((1, 1, len(window)), 1.0 / len(window))
        return probs, AttentionSnapshot(weights)


def load_oracle(path: str | os.PathLike) -> ModelInterface:
    """Build a model from a declarative JSON description."""
    try:
        description = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", exc.lineno) from exc
    kind = description.get("type")
    if kind == "scripted":
        return ScriptedModel(
            tokens=[(t, f) for t, f in description["tokens"]],
            num_frames=int(description["num_frames"]),
            loops=[tuple(l) for l in description.get("loops", [])],
            layers=int(description.get("layers", 2)),
            heads=int(description.get("heads", 2)),
            extra_vocab=tuple(description.get("extra_vocab", ())),
        )
    if kind == "table":
        return TableModel(description["vocab"], description["table"], description.get("default"))
    if kind == "random":
        return RandomContextModel(int(description["seed"]), description["vocab"],
                                  float(description.get("us_floor", 0.05)))
    raise ParseError(f"{path}: unknown oracle type {kind!r}")
