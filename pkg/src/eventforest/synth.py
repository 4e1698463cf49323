"""Deterministic piecewise-stationary token streams with known event boundaries.

Randomness comes from Philox streams keyed by ``SeedSequence(seed,
spawn_key=...)``: one key for the stream layout, one per frame. Any frame
can therefore be regenerated on its own, in any order or process.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Tuple

import numpy as np

from .errors import InvalidSpec

_LAYOUT_KEY = 0
_FRAME_KEY = 1


@dataclass(frozen=True)
class StreamSpec:
    seed: int = 0
    num_events: int = 20
    frames_per_event: Tuple[int, int] = (8, 16)  # inclusive range
    d: int = 64
    tokens_per_frame: int = 256
    cluster_spread: float = 0.05   # per-component std of token noise
    event_separation: float = 1.0  # distance between consecutive unit centers
    # when set, exactly this many frames, split at random into num_events events
    num_frames: Optional[int] = None

    def validate(self) -> None:
        lo, hi = self.frames_per_event
        if self.num_events < 1:
            raise InvalidSpec("num_events must be >= 1")
        if self.num_frames is None and not 1 <= lo <= hi:
            raise InvalidSpec(f"bad frames_per_event range {self.frames_per_event}")
        if self.num_frames is not None and self.num_frames < self.num_events:
            raise InvalidSpec("num_frames must be >= num_events")
        if self.d < 2 or self.tokens_per_frame < 1:
            raise InvalidSpec("d must be >= 2 and tokens_per_frame >= 1")
        if self.cluster_spread < 0:
            raise InvalidSpec("cluster_spread must be >= 0")
        if not 0 < self.event_separation <= 2:
            raise InvalidSpec("event_separation between unit centers must lie in (0, 2]")
        if not self.event_separation > 2 * self.cluster_spread:
            raise InvalidSpec("event_separation must exceed 2 * cluster_spread")


@dataclass(frozen=True)
class GroundTruth:
    event_ids: np.ndarray          # per frame
    boundaries: Tuple[float, ...]  # timestamp of the first frame of events 1..K-1
    event_spans: Tuple[Tuple[float, float], ...]

    def to_dict(self) -> dict:
        return {
            "event_ids": [int(e) for e in self.event_ids],
            "boundaries": list(self.boundaries),
            "event_spans": [list(s) for s in self.event_spans],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GroundTruth":
        return cls(np.asarray(data["event_ids"], dtype=np.int64),
                   tuple(float(b) for b in data["boundaries"]),
                   tuple((float(a), float(b)) for a, b in data["event_spans"]))


def _rng(spec: StreamSpec, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(spec.seed, spawn_key=key)))


class _Layout:
    def __init__(self, spec: StreamSpec):
        spec.validate()
        rng = _rng(spec, _LAYOUT_KEY)
        if spec.num_frames is None:
            lo, hi = spec.frames_per_event
            lengths = rng.integers(lo, hi + 1, size=spec.num_events)
        else:
            cuts = np.sort(rng.choice(np.arange(1, spec.num_frames), spec.num_events - 1, replace=False))
            lengths = np.diff(np.concatenate([[0], cuts, [spec.num_frames]]))
        self.event_ids = np.repeat(np.arange(spec.num_events), lengths)

        cos_sep = 1.0 - spec.event_separation ** 2 / 2.0
        sin_sep = np.sqrt(max(0.0, 1.0 - cos_sep ** 2))
        centers = np.empty((spec.num_events, spec.d))
        mu = rng.standard_normal(spec.d)
        centers[0] = mu / np.linalg.norm(mu)
        for k in range(1, spec.num_events):
            prev = centers[k - 1]
            u = rng.standard_normal(spec.d)
            u -= (u @ prev) * prev
            u /= np.linalg.norm(u)
            c = cos_sep * prev + sin_sep * u
            centers[k] = c / np.linalg.norm(c)
        self.centers = centers


def frame_tokens(spec: StreamSpec, index: int, center: np.ndarray) -> np.ndarray:
    """Tokens of frame ``index``: unit-normalized noisy copies of ``center``."""
    c = np.asarray(center, dtype=np.float32)
    if spec.cluster_spread > 0:
        noise = _rng(spec, _FRAME_KEY, index).standard_normal((spec.tokens_per_frame, spec.d), dtype=np.float32)
        x = c + np.float32(spec.cluster_spread) * noise
    else:
        x = np.tile(c, (spec.tokens_per_frame, 1))
    norms = np.sqrt(np.einsum("ij,ij->i", x, x, dtype=np.float64))
    return (x / norms[:, None]).astype(np.float32)


def ground_truth(spec: StreamSpec) -> GroundTruth:
    ids = _Layout(spec).event_ids
    times = np.arange(1, len(ids) + 1, dtype=np.float64)
    starts = np.flatnonzero(np.diff(ids)) + 1
    first = np.concatenate([[0], starts])
    last = np.concatenate([starts - 1, [len(ids) - 1]])
    return GroundTruth(ids, tuple(float(times[s]) for s in starts),
                       tuple((float(times[a]), float(times[b])) for a, b in zip(first, last)))


def iter_frames(spec: StreamSpec) -> Iterator[Tuple[float, np.ndarray]]:
    """Yield ``(timestamp, tokens)`` lazily; frame ``k`` (0-based) is at ``k + 1`` seconds."""
    layout = _Layout(spec)
    for k, e in enumerate(layout.event_ids):
        yield float(k + 1), frame_tokens(spec, k, layout.centers[e])


def generate(spec: StreamSpec):
    """Materialize the whole stream: ``(times, frames, truth)``.

    ``frames`` has shape ``(num_frames, tokens_per_frame, d)``, float32.
    """
    layout = _Layout(spec)
    n = len(layout.event_ids)
    frames = np.empty((n, spec.tokens_per_frame, spec.d), dtype=np.float32)
    for k, e in enumerate(layout.event_ids):
        frames[k] = frame_tokens(spec, k, layout.centers[e])
    return np.arange(1, n + 1, dtype=np.float64), frames, ground_truth(spec)


def boundary_contrast(spec: StreamSpec) -> Tuple[float, float]:
    """Mean consecutive-frame cosine (of frame means) within events and across boundaries."""
    _, frames, truth = generate(spec)
    means = frames.astype(np.float64).mean(axis=1)
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    cos = np.einsum("ij,ij->i", means[:-1], means[1:])
    across = np.diff(truth.event_ids) != 0
    within = cos[~across].mean() if (~across).any() else float("nan")
    cross = cos[across].mean() if across.any() else float("nan")
    return float(within), float(cross)


def self_test(spec: StreamSpec) -> bool:
    """True when boundaries are detectable: within-event similarity beats cross-boundary."""
    within, cross = boundary_contrast(spec)
    return spec.num_events == 1 or within > cross
