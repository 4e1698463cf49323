"""Short-horizon window: one full-resolution frame plus a queue of pooled frames.

When the queue overflows, its oldest frames are cut at the first local
minimum of inter-frame similarity and handed out as an ``EventNode``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import TokenMatrix, concat, pool_tokens, unit_rows
from .errors import NonMonotonicTime, ShapeMismatch


@dataclass(frozen=True)
class WindowConfig:
    realtime_tokens: int = 729
    shortterm_frames: int = 18
    shortterm_tokens_per_frame: int = 128
    local_min_radius: int = 1
    # row-major layout of a realtime frame; None means square (or a column)
    grid: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        for name in ("realtime_tokens", "shortterm_frames", "shortterm_tokens_per_frame", "local_min_radius"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.shortterm_tokens_per_frame > self.realtime_tokens:
            raise ValueError("short-term frames cannot hold more tokens than a realtime frame")

    @property
    def budget(self) -> int:
        return self.realtime_tokens + self.shortterm_frames * self.shortterm_tokens_per_frame


@dataclass(frozen=True, eq=False)
class EventNode:
    tokens: TokenMatrix
    timestamp: float
    merge_count: int
    span: Tuple[float, float]
    frame_times: np.ndarray = field(repr=False)
    # tokens per frame block while the node is still a plain run of frames
    frame_tokens: Optional[int] = None

    @property
    def n(self) -> int:
        return self.tokens.n

    @property
    def lineage_frames(self) -> int:
        return len(self.frame_times)

    def frames(self) -> List["EventNode"]:
        """Split a fresh node back into single-frame nodes (used by frame-level policies)."""
        if self.frame_tokens is None or self.lineage_frames == 1:
            return [self]
        out = []
        for k, t in enumerate(self.frame_times):
            part = self.tokens.take(slice(k * self.frame_tokens, (k + 1) * self.frame_tokens))
            out.append(EventNode(part, float(t), 0, (float(t), float(t)),
                                 np.array([t]), self.frame_tokens))
        return out


def frame_similarity(a, b) -> float:
    """Cosine similarity between the mean embeddings of two frames."""
    ma = a.mean() if isinstance(a, TokenMatrix) else np.asarray(a, dtype=np.float64)
    mb = b.mean() if isinstance(b, TokenMatrix) else np.asarray(b, dtype=np.float64)
    ua, ub = unit_rows(ma), unit_rows(mb)
    return float(np.clip(ua[0] @ ub[0], -1.0, 1.0))


def find_cut(sims: Sequence[float], radius: int = 1) -> int:
    """Index ``j`` of the first interior local minimum of ``sims``, or 0.

    ``sims[j]`` must be strictly below the ``radius`` values on its left and
    not above the ``radius`` values on its right, so a flat valley cuts at
    its earliest point.
    """
    s = list(sims)
    for j in range(radius, len(s) - radius):
        left = s[j - radius:j]
        right = s[j + 1:j + 1 + radius]
        if all(s[j] < v for v in left) and all(s[j] <= v for v in right):
            return j
    return 0


def make_node(frames: Sequence[Tuple[TokenMatrix, float]]) -> EventNode:
    times = np.array([t for _, t in frames], dtype=np.float64)
    per_frame = frames[0][0].n
    uniform = all(f.n == per_frame for f, _ in frames)
    return EventNode(
        tokens=concat([f for f, _ in frames]),
        timestamp=float(times.mean()),
        merge_count=0,
        span=(float(times[0]), float(times[-1])),
        frame_times=times,
        frame_tokens=per_frame if uniform else None,
    )


def segment(frames: Sequence[Tuple[TokenMatrix, float]], sims: Sequence[float], radius: int = 1):
    """Cut the oldest meta-event off ``frames``.

    Returns ``(node, remaining_frames, remaining_sims)`` where ``sims[k]`` is
    the similarity between ``frames[k]`` and ``frames[k + 1]``.
    """
    if len(frames) < 2:
        raise ValueError("segment needs at least two frames")
    if len(sims) != len(frames) - 1:
        raise ShapeMismatch(f"{len(sims)} similarities for {len(frames)} frames")
    j = find_cut(sims, radius)
    return make_node(frames[: j + 1]), list(frames[j + 1:]), list(sims[j + 1:])


class Window:
    """Single-writer state machine; feed frames in time order through :meth:`ingest`."""

    def __init__(self, config: Optional[WindowConfig] = None):
        self.config = config or WindowConfig()
        self.realtime: Optional[Tuple[TokenMatrix, float]] = None
        self.queue: List[Tuple[TokenMatrix, float]] = []
        self.sims: List[float] = []
        self._last_mean: Optional[np.ndarray] = None
        self.frames_seen = 0

    @property
    def last_time(self) -> Optional[float]:
        if self.realtime is not None:
            return self.realtime[1]
        return self.queue[-1][1] if self.queue else None

    def token_count(self) -> int:
        n = self.realtime[0].n if self.realtime is not None else 0
        return n + sum(f.n for f, _ in self.queue)

    def ingest(self, frame, t: float) -> List[EventNode]:
        cfg = self.config
        if not isinstance(frame, TokenMatrix):
            frame = TokenMatrix.from_array(frame)
        last = self.last_time
        if last is not None and not t > last:
            raise NonMonotonicTime(f"frame time {t} does not follow {last}")
        if frame.n != cfg.realtime_tokens:
            raise ShapeMismatch(f"frame has {frame.n} tokens, window expects {cfg.realtime_tokens}")

        if self.realtime is not None:
            prev, t_prev = self.realtime
            pooled = pool_tokens(prev, cfg.shortterm_tokens_per_frame, cfg.grid)
            mean = pooled.mean()
            if self._last_mean is not None:
                self.sims.append(frame_similarity(self._last_mean, mean))
            self.queue.append((pooled, t_prev))
            self._last_mean = mean
        self.realtime = (frame, float(t))
        self.frames_seen += 1

        emitted = []
        while len(self.queue) > cfg.shortterm_frames:
            node, self.queue, self.sims = segment(self.queue, self.sims, cfg.local_min_radius)
            emitted.append(node)
        return emitted

    def segments(self) -> List[Tuple[str, float, TokenMatrix]]:
        out = [("shortterm", t, f) for f, t in self.queue]
        if self.realtime is not None:
            out.append(("realtime", self.realtime[1], self.realtime[0]))
        return out
