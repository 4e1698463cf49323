"""Slow, straight-line reference implementations used to cross-check the fast paths.

Nothing here shares code with the paths it checks beyond the data types.
"""

from __future__ import annotations

from typing import Dict, List, Sequence, Tuple

import numpy as np


def _unit_rows(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x / np.sqrt((x * x).sum(axis=1, keepdims=True))


def naive_similarity_penalty(x_tokens, y_tokens) -> float:
    """Fully sort the clamped cross cosines and average the top ``min(n_x, n_y)``."""
    sims = np.clip(_unit_rows(x_tokens) @ _unit_rows(y_tokens).T, 0.0, 1.0).ravel()
    k = min(len(x_tokens), len(y_tokens))
    return 1.0 - float(np.sort(sims)[::-1][:k].sum()) / k


def scan_argmin(roots: Sequence, weights: Tuple[float, float, float], t_q: float) -> Tuple[int, List[float]]:
    """Exhaustive scan of adjacent pairs; returns the earliest index of the lowest total."""
    w_s, w_m, w_t = weights
    c_max = max(r.merge_count for r in roots)
    totals = []
    for i in range(len(roots) - 1):
        a, b = roots[i], roots[i + 1]
        p_s = naive_similarity_penalty(a.tokens.tokens, b.tokens.tokens)
        p_m = 0.0 if c_max == 0 else (a.merge_count + b.merge_count) / (2 * c_max)
        d_a = (t_q - a.timestamp) / t_q
        d_b = (t_q - b.timestamp) / t_q
        p_t = 1 - (d_a + d_b) / 2
        totals.append(w_s * p_s + w_m * p_m + w_t * p_t)
    best = 0
    for i, v in enumerate(totals):
        if v < totals[best]:
            best = i
    return best, totals


def naive_tome(a_tokens, a_weights, b_tokens, b_weights, target: int):
    """Reference bipartite merge that tracks groups of original tokens explicitly.

    Returns ``(values, weights, groups)``; each value is the weight-weighted
    mean of the original tokens in its group, computed directly from them.
    """
    orig = np.concatenate([np.asarray(a_tokens, np.float64), np.asarray(b_tokens, np.float64)])
    ow = [int(w) for w in a_weights] + [int(w) for w in b_weights]
    na = len(a_tokens)

    def value(group):
        tot = sum(ow[i] for i in group)
        return sum(ow[i] * orig[i] for i in group) / tot

    A = [[i] for i in range(na)]
    B = [[na + j] for j in range(len(b_tokens))]
    total = len(A) + len(B)
    while True:
        r = min(total - target, max(len(A), len(B)))
        a_is_src = len(A) >= len(B)
        src, dst = (A, B) if a_is_src else (B, A)
        scores = _unit_rows([value(g) for g in src]) @ _unit_rows([value(h) for h in dst]).T
        scores = np.round(scores, 12)  # rounding noise is not a preference
        edges = []
        for si in range(len(src)):
            best_j = int(np.argmax(scores[si]))  # first maximum
            edges.append((float(scores[si, best_j]), si, best_j))
        edges.sort(key=lambda e: (-e[0], e[1]))
        merged = edges[:r]
        new_dst = [list(h) for h in dst]
        gone = set()
        for _, si, dj in merged:
            new_dst[dj].extend(src[si])
            gone.add(si)
        rest = [g for si, g in enumerate(src) if si not in gone]
        out = rest + new_dst if a_is_src else new_dst + rest
        if len(out) == target:
            values = np.array([value(g) for g in out])
            weights = np.array([sum(ow[i] for i in g) for g in out])
            return values, weights, out
        A, B, total = out[0::2], out[1::2], len(out)


class AbsorptionTracker:
    """Replays inserts and merges as mixing coefficients over original frame times.

    A root's timestamp must equal the coefficient-weighted mean of the frame
    times it has absorbed.
    """

    def __init__(self):
        self.roots: List[Dict[float, float]] = []

    def insert(self, frame_times) -> None:
        times = [float(t) for t in frame_times]
        self.roots.append({t: 1.0 / len(times) for t in times})

    def merge(self, index: int, n_left: int, n_right: int) -> None:
        if index < 0:
            return  # self-compression keeps the timestamp
        left, right = self.roots[index], self.roots[index + 1]
        tot = n_left + n_right
        mixed = {t: c * n_left / tot for t, c in left.items()}
        for t, c in right.items():
            mixed[t] = mixed.get(t, 0.0) + c * n_right / tot
        self.roots[index:index + 2] = [mixed]

    def expected_timestamps(self) -> List[float]:
        return [sum(t * c for t, c in coef.items()) / sum(coef.values()) for coef in self.roots]


def oldest_first_trace(nodes_and_times, budget: int):
    """Reference forest that always merges the two oldest roots.

    ``nodes_and_times`` yields ``(node, t_now)``. Returns the list of
    ``(index, n_out, timestamp, span)`` merges and the final roots.
    """
    from .pemf import compress_node, merge_nodes  # merge arithmetic itself is checked elsewhere

    roots, trace = [], []
    for node, _ in nodes_and_times:
        roots.append(node)
        while sum(r.n for r in roots) > budget:
            if len(roots) == 1:
                roots[0] = compress_node(roots[0])
                trace.append((-1, roots[0].n, roots[0].timestamp, roots[0].span))
            else:
                new = merge_nodes(roots[0], roots[1])
                roots[0:2] = [new]
                trace.append((0, new.n, new.timestamp, new.span))
    return trace, roots
