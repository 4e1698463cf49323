"""Budgeted event-memory forest.

Roots are kept in time order. Whenever their token total exceeds the
budget, the adjacent pair with the lowest weighted penalty

    total = w_s * P_s + w_m * P_m + w_t * P_t

is merged into one node holding half the pair's tokens.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import TokenMatrix, concat, merged_timestamp, tome_merge, top_k_similarities
from .errors import InvalidQueryTime, NonMonotonicTime, SingleRoot
from .fstw import EventNode, Window


@dataclass(frozen=True)
class PenaltyWeights:
    w_s: float = 0.4
    w_m: float = 0.4
    w_t: float = 0.2

    def __post_init__(self):
        ws = (self.w_s, self.w_m, self.w_t)
        if any(not math.isfinite(w) or w < 0 for w in ws):
            raise ValueError(f"penalty weights must be finite and >= 0, got {ws}")
        if not any(w > 0 for w in ws):
            raise ValueError("at least one penalty weight must be positive")

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.w_s, self.w_m, self.w_t)


@dataclass(frozen=True)
class PairScore:
    p_s: float
    p_m: float
    p_t: float
    total: float
    k: int


def similarity_penalty(x_i: EventNode, x_j: EventNode) -> float:
    """One minus the mean of the ``min(n_i, n_j)`` largest clamped cross similarities."""
    top = top_k_similarities(x_i.tokens, x_j.tokens, min(x_i.n, x_j.n))
    # clamping is monotone, so clamping the top-k equals taking the top-k of the clamped matrix
    return float(1.0 - np.clip(top, 0.0, 1.0).mean())


def merge_count_penalty(x_i: EventNode, x_j: EventNode, c_max: int) -> float:
    if c_max == 0:
        return 0.0
    return (x_i.merge_count + x_j.merge_count) / (2 * c_max)


def temporal_penalty(x_i: EventNode, x_j: EventNode, t_q: float) -> float:
    if not t_q > 0:
        raise InvalidQueryTime(f"query time must be positive, got {t_q}")
    d_i = (t_q - x_i.timestamp) / t_q
    d_j = (t_q - x_j.timestamp) / t_q
    return 1 - (d_i + d_j) / 2


def overall_penalty(x_i: EventNode, x_j: EventNode, weights: PenaltyWeights,
                    c_max: int, t_q: float, p_s: Optional[float] = None) -> PairScore:
    """Score one adjacent pair. ``p_s`` may be passed in when already known."""
    if p_s is None:
        p_s = similarity_penalty(x_i, x_j)
    p_m = merge_count_penalty(x_i, x_j, c_max)
    p_t = temporal_penalty(x_i, x_j, t_q)
    total = weights.w_s * p_s + weights.w_m * p_m + weights.w_t * p_t
    return PairScore(p_s, p_m, p_t, total, min(x_i.n, x_j.n))


def merge_nodes(x_i: EventNode, x_j: EventNode) -> EventNode:
    """Consolidate two adjacent nodes into one with half their tokens."""
    target = (x_i.n + x_j.n) // 2
    return EventNode(
        tokens=tome_merge(x_i.tokens, x_j.tokens, target),
        timestamp=merged_timestamp(x_i.timestamp, x_i.n, x_j.timestamp, x_j.n),
        merge_count=max(x_i.merge_count, x_j.merge_count) + 1,
        span=(x_i.span[0], x_j.span[1]),
        frame_times=np.concatenate([x_i.frame_times, x_j.frame_times]),
    )


def compress_node(node: EventNode) -> EventNode:
    """Halve a lone node by merging its even-position tokens with its odd ones."""
    even = node.tokens.take(slice(0, None, 2))
    odd = node.tokens.take(slice(1, None, 2))
    return EventNode(
        tokens=tome_merge(even, odd, node.n // 2),
        timestamp=node.timestamp,
        merge_count=node.merge_count + 1,
        span=node.span,
        frame_times=node.frame_times,
    )


@dataclass(frozen=True)
class MergeRecord:
    index: int
    score: Optional[PairScore]
    node: EventNode


@dataclass(frozen=True)
class TraceEntry:
    """Lightweight record of one merge; ``index`` is -1 for a self-compression."""

    index: int
    n_left: int
    n_right: int
    n_out: int
    timestamp: float
    merge_count: int
    span: Tuple[float, float]


class MemoryForest:
    """Time-ordered roots under a token budget.

    Pair similarity penalties are computed lazily, cached per adjacent pair
    and invalidated only for pairs touching a new node; the merge-count and
    temporal terms are re-evaluated for every pair on every step.
    """

    def __init__(self, budget: int, weights: Optional[PenaltyWeights] = None, keep_trace: bool = False):
        if budget < 1:
            raise ValueError("forest budget must be a positive integer")
        self.budget = int(budget)
        self.weights = weights or PenaltyWeights()
        self.roots: List[EventNode] = []
        self.t_q: Optional[float] = None
        self.c_max = 0
        self.total_tokens = 0
        self.trace: Optional[List[TraceEntry]] = [] if keep_trace else None
        self._ps: List[Optional[float]] = []

    def __len__(self) -> int:
        return len(self.roots)

    # -- scoring ---------------------------------------------------------

    def _pair_ps(self, k: int) -> float:
        p = self._ps[k]
        if p is None:
            p = self._ps[k] = similarity_penalty(self.roots[k], self.roots[k + 1])
        return p

    def _cheap_terms(self):
        counts = np.array([r.merge_count for r in self.roots], dtype=np.float64)
        times = np.array([r.timestamp for r in self.roots], dtype=np.float64)
        if self.c_max == 0:
            p_m = np.zeros(len(self.roots) - 1)
        else:
            p_m = (counts[:-1] + counts[1:]) / (2 * self.c_max)
        t_q = self.t_q
        if t_q is None or not t_q > 0:
            raise InvalidQueryTime(f"query time must be positive, got {t_q}")
        d = (t_q - times) / t_q
        p_t = 1 - (d[:-1] + d[1:]) / 2
        return p_m, p_t

    def _score_arrays(self):
        p_m, p_t = self._cheap_terms()
        p_s = np.array([self._pair_ps(k) for k in range(len(self.roots) - 1)], dtype=np.float64)
        w = self.weights
        total = w.w_s * p_s + w.w_m * p_m + w.w_t * p_t
        return p_s, p_m, p_t, total

    def pair_scores(self) -> List[PairScore]:
        p_s, p_m, p_t, total = self._score_arrays()
        return [
            PairScore(float(p_s[k]), float(p_m[k]), float(p_t[k]), float(total[k]),
                      min(self.roots[k].n, self.roots[k + 1].n))
            for k in range(len(self.roots) - 1)
        ]

    # -- mutation --------------------------------------------------------

    def append(self, node: EventNode, t_now: float) -> None:
        """Add ``node`` as the newest root without consolidating."""
        if self.roots:
            last = self.roots[-1]
            if not node.timestamp > last.timestamp or not node.span[0] > last.span[1]:
                raise NonMonotonicTime(
                    f"node at {node.timestamp} (span {node.span}) does not follow root at "
                    f"{last.timestamp} (span {last.span})")
        if t_now < node.span[1]:
            raise NonMonotonicTime(f"query time {t_now} precedes node span end {node.span[1]}")
        if not t_now > 0:
            raise InvalidQueryTime(f"query time must be positive, got {t_now}")
        self.t_q = float(t_now)
        if self.roots:
            self._ps.append(None)
        self.roots.append(node)
        self.total_tokens += node.n
        self.c_max = max(self.c_max, node.merge_count)

    def insert(self, node: EventNode, t_now: float) -> List[MergeRecord]:
        self.append(node, t_now)
        return self.consolidate()

    def over_budget(self) -> bool:
        return self.total_tokens > self.budget

    def consolidate(self) -> List[MergeRecord]:
        records = []
        while self.over_budget():
            if len(self.roots) >= 2:
                records.append(self.consolidate_step())
            else:
                records.append(self.self_compress())
        return records

    def select_pair(self) -> Tuple[int, PairScore]:
        """Earliest adjacent pair with the minimal total penalty.

        Since P_s >= 0 and float rounding is monotone, the total computed
        with P_s = 0 bounds each pair from below. Pairs are visited in
        order of that bound and P_s is only computed while a pair could
        still win or tie, so the result equals a full scan.
        """
        if len(self.roots) < 2:
            raise SingleRoot("need at least two roots to pick a pair")
        p_m, p_t = self._cheap_terms()
        w = self.weights
        lower = w.w_s * 0.0 + w.w_m * p_m + w.w_t * p_t
        best, best_total = -1, math.inf
        for k in np.argsort(lower, kind="stable"):
            k = int(k)
            if lower[k] > best_total:
                break
            if lower[k] == best_total and k > best:
                continue
            total = w.w_s * self._pair_ps(k) + w.w_m * p_m[k] + w.w_t * p_t[k]
            if total < best_total or (total == best_total and k < best):
                best, best_total = k, total
        i = best
        return i, PairScore(float(self._ps[i]), float(p_m[i]), float(p_t[i]), float(best_total),
                            min(self.roots[i].n, self.roots[i + 1].n))

    def consolidate_step(self) -> MergeRecord:
        i, score = self.select_pair()
        left, right = self.roots[i], self.roots[i + 1]
        new = merge_nodes(left, right)
        self.roots[i:i + 2] = [new]
        self.total_tokens += new.n - left.n - right.n

        # pairs (i-1, i), (i, i+1), (i+1, i+2) collapse into (i-1, new), (new, i+2)
        lo = max(i - 1, 0)
        self._ps[lo:i + 2] = [None] * ((i > 0) + (i + 1 < len(self.roots)))

        self.c_max = max(r.merge_count for r in self.roots)
        self._record(i, left.n, right.n, new)
        return MergeRecord(i, score, new)

    def self_compress(self) -> MergeRecord:
        if len(self.roots) != 1:
            raise ValueError("self_compress applies to a single-root forest")
        old = self.roots[0]
        new = compress_node(old)
        self.roots[0] = new
        self.total_tokens += new.n - old.n
        self.c_max = new.merge_count
        self._record(-1, old.n, 0, new)
        return MergeRecord(-1, None, new)

    def _record(self, index, n_left, n_right, node):
        if self.trace is not None:
            self.trace.append(TraceEntry(index, n_left, n_right, node.n, node.timestamp,
                                         node.merge_count, node.span))

    def token_count(self) -> int:
        return self.total_tokens

    def segments(self) -> List[Tuple[str, float, TokenMatrix]]:
        return [("memory", r.timestamp, r.tokens) for r in self.roots]


@dataclass(frozen=True)
class Snapshot:
    """Ordered token sequence handed to a downstream reader."""

    segments: Tuple[Tuple[str, float, TokenMatrix], ...]

    @property
    def n_tokens(self) -> int:
        return sum(seg[2].n for seg in self.segments)

    @property
    def timestamps(self) -> List[float]:
        return [seg[1] for seg in self.segments]

    def tokens(self) -> Optional[TokenMatrix]:
        if not self.segments:
            return None
        return concat([seg[2] for seg in self.segments])

    def token_timestamps(self) -> np.ndarray:
        if not self.segments:
            return np.zeros(0)
        return np.concatenate([np.full(seg[2].n, seg[1]) for seg in self.segments])


def build_snapshot(memory_segments: Sequence, window: Optional[Window] = None) -> Snapshot:
    segs = list(memory_segments)
    if window is not None:
        segs.extend(window.segments())
    return Snapshot(tuple(segs))


def snapshot(forest: MemoryForest, window: Optional[Window] = None) -> Snapshot:
    """Forest roots (oldest first), then the short-term queue, then the realtime frame."""
    return build_snapshot(forest.segments(), window)
