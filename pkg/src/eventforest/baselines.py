"""Comparison memory policies behind one interface.

Every policy receives the same ``EventNode`` stream the window emits and
must keep its stored token total within ``budget`` after each update.
"""

from __future__ import annotations

import enum
from collections import deque
from typing import Deque, List, Optional, Tuple

import numpy as np

from .core import TokenMatrix
from .fstw import EventNode, Window
from .pemf import (MemoryForest, PenaltyWeights, Snapshot, TraceEntry, build_snapshot,
                   compress_node, merge_nodes, similarity_penalty)


class PolicyKind(str, enum.Enum):
    PEMF = "pemf"
    FIFO = "fifo"
    UNIFORM = "uniform"
    SIMILARITY_MERGE = "similarity_merge"
    PYRAMID = "pyramid"


class MemoryPolicy:
    kind: PolicyKind

    def __init__(self, budget: int):
        if budget < 1:
            raise ValueError("policy budget must be a positive integer")
        self.budget = int(budget)

    @property
    def units(self) -> List[EventNode]:
        raise NotImplementedError

    def update(self, node: EventNode, t_now: float) -> None:
        raise NotImplementedError

    def token_count(self) -> int:
        return sum(u.n for u in self.units)

    def segments(self):
        return [("memory", u.timestamp, u.tokens) for u in self.units]

    @property
    def trace(self) -> Optional[List[TraceEntry]]:
        return None


class PemfPolicy(MemoryPolicy):
    kind = PolicyKind.PEMF

    def __init__(self, budget: int, weights: Optional[PenaltyWeights] = None, keep_trace: bool = False):
        super().__init__(budget)
        self.forest = MemoryForest(budget, weights, keep_trace=keep_trace)

    @property
    def units(self):
        return self.forest.roots

    def update(self, node, t_now):
        self.forest.insert(node, t_now)

    def token_count(self):
        return self.forest.token_count()

    @property
    def trace(self):
        return self.forest.trace


class FifoPolicy(MemoryPolicy):
    """Drop whole oldest nodes; a lone oversized node loses its oldest frames, then tokens."""

    kind = PolicyKind.FIFO

    def __init__(self, budget: int):
        super().__init__(budget)
        self._nodes: Deque[EventNode] = deque()
        self._total = 0

    @property
    def units(self):
        return list(self._nodes)

    def token_count(self):
        return self._total

    def update(self, node, t_now):
        self._nodes.append(node)
        self._total += node.n
        while self._total > self.budget and len(self._nodes) > 1:
            self._total -= self._nodes.popleft().n
        if self._total > self.budget:
            self._nodes[0] = _keep_newest(self._nodes[0], self.budget)
            self._total = self._nodes[0].n


def _keep_newest(node: EventNode, budget: int) -> EventNode:
    frames = node.frames()
    kept, total = [], 0
    for f in reversed(frames):
        if total + f.n > budget:
            break
        kept.append(f)
        total += f.n
    if not kept:
        last = frames[-1]
        tokens = last.tokens.take(slice(last.n - budget, None))
        return EventNode(tokens, last.timestamp, last.merge_count, last.span, last.frame_times)
    kept.reverse()
    times = np.concatenate([f.frame_times for f in kept])
    tokens = TokenMatrix._trusted(np.concatenate([f.tokens.tokens for f in kept]),
                                  np.concatenate([f.tokens.weights for f in kept]))
    return EventNode(tokens, float(times.mean()), node.merge_count,
                     (kept[0].span[0], kept[-1].span[1]), times,
                     node.frame_tokens if len(kept) > 1 else kept[0].frame_tokens)


def stride_sample(tokens: TokenMatrix, stride: int) -> TokenMatrix:
    """Every ``stride``-th token, starting with the first."""
    return tokens.take(slice(0, None, stride))


class UniformPolicy(MemoryPolicy):
    """Uniform temporal subsampling with stride doubling.

    Nodes are indexed by arrival; only indices divisible by the current
    stride are kept. When over budget the stride doubles; once a single node
    remains, that node's tokens are stride-2 subsampled instead.
    """

    kind = PolicyKind.UNIFORM

    def __init__(self, budget: int):
        super().__init__(budget)
        self.stride = 1
        self._arrivals = 0
        self._nodes: List[Tuple[int, EventNode]] = []

    @property
    def units(self):
        return [n for _, n in self._nodes]

    def update(self, node, t_now):
        idx = self._arrivals
        self._arrivals += 1
        if idx % self.stride == 0:
            self._nodes.append((idx, node))
        while self.token_count() > self.budget:
            if len(self._nodes) > 1:
                self.stride *= 2
                self._nodes = [(i, n) for i, n in self._nodes if i % self.stride == 0]
            else:
                i, lone = self._nodes[0]
                self._nodes[0] = (i, EventNode(stride_sample(lone.tokens, 2), lone.timestamp,
                                               lone.merge_count, lone.span, lone.frame_times))


class SimilarityMergePolicy(MemoryPolicy):
    """Repeatedly merge the adjacent pair whose similarity penalty is lowest.

    Kept deliberately separate from ``MemoryForest`` so the two can be
    checked against each other.
    """

    kind = PolicyKind.SIMILARITY_MERGE

    def __init__(self, budget: int, keep_trace: bool = False):
        super().__init__(budget)
        self._roots: List[EventNode] = []
        self._cache = {}
        self._trace: Optional[List[TraceEntry]] = [] if keep_trace else None

    @property
    def units(self):
        return list(self._roots)

    @property
    def trace(self):
        return self._trace

    def _penalty(self, a: EventNode, b: EventNode) -> float:
        key = (id(a), id(b))
        hit = self._cache.get(key)
        if hit is None or hit[0] is not a or hit[1] is not b:
            hit = (a, b, similarity_penalty(a, b))
            self._cache[key] = hit
        return hit[2]

    def update(self, node, t_now):
        self._roots.append(node)
        total = sum(r.n for r in self._roots)
        while total > self.budget:
            if len(self._roots) == 1:
                old = self._roots[0]
                self._roots[0] = compress_node(old)
                total = self._roots[0].n
                self._log(-1, old.n, 0, self._roots[0])
                continue
            penalties = [self._penalty(self._roots[k], self._roots[k + 1])
                         for k in range(len(self._roots) - 1)]
            best = min(range(len(penalties)), key=lambda k: (penalties[k], k))
            left, right = self._roots[best], self._roots[best + 1]
            new = merge_nodes(left, right)
            self._roots[best:best + 2] = [new]
            self._cache.pop((id(left), id(right)), None)
            total += new.n - left.n - right.n
            self._log(best, left.n, right.n, new)
        live = {id(r) for r in self._roots}
        self._cache = {k: v for k, v in self._cache.items() if k[0] in live and k[1] in live}

    def _log(self, index, n_left, n_right, node):
        if self._trace is not None:
            self._trace.append(TraceEntry(index, n_left, n_right, node.n, node.timestamp,
                                          node.merge_count, node.span))


class PyramidPolicy(MemoryPolicy):
    """Frame-replacement memory bank with ``levels`` FIFO levels.

    Capacities split the budget in ratio 4:2:1 (for three levels). A frame
    evicted from level ``l`` is promoted to level ``l + 1`` only if it is an
    even-numbered eviction of that level, so level ``l`` sees every
    ``2**l``-th frame evicted from the bottom.
    """

    kind = PolicyKind.PYRAMID

    def __init__(self, budget: int, levels: int = 3):
        super().__init__(budget)
        shares = [2 ** (levels - 1 - l) for l in range(levels)]
        self.capacities = [budget * s // sum(shares) for s in shares]
        self.levels: List[Deque[EventNode]] = [deque() for _ in range(levels)]
        self._level_tokens = [0] * levels
        self._evictions = [0] * levels

    @property
    def units(self):
        frames = [f for level in self.levels for f in level]
        return sorted(frames, key=lambda f: f.timestamp)

    def token_count(self):
        return sum(self._level_tokens)

    def update(self, node, t_now):
        for frame in node.frames():
            self._push(0, frame)

    def _push(self, level: int, frame: EventNode):
        if level >= len(self.levels) or frame.n > self.capacities[level]:
            return
        q = self.levels[level]
        q.append(frame)
        self._level_tokens[level] += frame.n
        while self._level_tokens[level] > self.capacities[level]:
            old = q.popleft()
            self._level_tokens[level] -= old.n
            promote = self._evictions[level] % 2 == 0
            self._evictions[level] += 1
            if promote:
                self._push(level + 1, old)


def make_policy(kind, budget: int, weights: Optional[PenaltyWeights] = None,
                keep_trace: bool = False) -> MemoryPolicy:
    kind = PolicyKind(kind)
    if kind is PolicyKind.PEMF:
        return PemfPolicy(budget, weights, keep_trace=keep_trace)
    if kind is PolicyKind.FIFO:
        return FifoPolicy(budget)
    if kind is PolicyKind.UNIFORM:
        return UniformPolicy(budget)
    if kind is PolicyKind.SIMILARITY_MERGE:
        return SimilarityMergePolicy(budget, keep_trace=keep_trace)
    return PyramidPolicy(budget)


def policy_update(policy: MemoryPolicy, node: EventNode, t_now: float) -> MemoryPolicy:
    policy.update(node, t_now)
    return policy


def policy_snapshot(policy: MemoryPolicy, window: Optional[Window] = None) -> Snapshot:
    return build_snapshot(policy.segments(), window)
