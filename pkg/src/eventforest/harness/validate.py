"""Run the reference oracles against a live forest on a configured stream."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .. import oracles
from ..baselines import SimilarityMergePolicy
from ..core import TokenMatrix
from ..fstw import Window
from ..pemf import MemoryForest, snapshot
from .config import RunConfig
from .driver import open_source

TOME_TOL = 1e-6
TS_MERGE_TOL = 1e-9
TS_RUN_TOL = 1e-6


@dataclass
class Check:
    name: str
    passed: Optional[bool]  # None = not applicable to this configuration
    detail: str = ""


@dataclass
class ValidationReport:
    checks: List[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed is not False for c in self.checks)

    def to_dict(self) -> dict:
        return {"passed": self.passed,
                "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in self.checks]}

    def to_text(self) -> str:
        label = {True: "PASS", False: "FAIL", None: "SKIP"}
        return "".join(f"{label[c.passed]}  {c.name}: {c.detail}\n" for c in self.checks)


class _Tally:
    def __init__(self):
        self.n = 0
        self.bad = []

    def add(self, ok, what):
        self.n += 1
        if not ok and len(self.bad) < 5:
            self.bad.append(what)
        return ok

    def check(self, name):
        ok = not self.bad
        return Check(name, ok, f"{self.n} checked" + ("" if ok else f"; first failures: {self.bad}"))


def validate(config: RunConfig, *, max_frames: Optional[int] = None,
             tome_every: int = 1, corrupt: Optional[str] = None) -> ValidationReport:
    """Drive the forest frame by frame and audit every consolidation step.

    ``corrupt="budget"`` is a test hook: it pushes an extra root past the
    budget without consolidating, so the budget audit must fail.
    """
    src = open_source(config)
    wcfg = config.window_config(src.tokens_per_frame)
    lq = config.forest_budget(src.tokens_per_frame)
    weights = config.weights
    window = Window(wcfg)
    forest = MemoryForest(lq, weights, keep_trace=True)
    tracker = oracles.AbsorptionTracker()
    sim_ref = SimilarityMergePolicy(lq, keep_trace=True) if weights.as_tuple() == (1.0, 0.0, 0.0) else None
    fifo_ref = [] if weights.as_tuple() == (0.0, 0.0, 1.0) else None

    pair, tome, ts, budget, snap = _Tally(), _Tally(), _Tally(), _Tally(), _Tally()
    merges = 0
    for k, (t, frame) in enumerate(src.frames()):
        if max_frames is not None and k >= max_frames:
            break
        for node in window.ingest(TokenMatrix.from_array(frame), t):
            if sim_ref is not None:
                sim_ref.update(node, t)
            if fifo_ref is not None:
                fifo_ref.append((node, t))
            forest.append(node, t)
            tracker.insert(node.frame_times)
            while forest.over_budget():
                if len(forest.roots) >= 2:
                    want, _ = oracles.scan_argmin(forest.roots, weights.as_tuple(), forest.t_q)
                    before = list(forest.roots)
                    rec = forest.consolidate_step()
                    left, right = before[rec.index], before[rec.index + 1]
                    pair.add(rec.index == want, (t, rec.index, want))
                    expect = (left.timestamp * left.n + right.timestamp * right.n) / (left.n + right.n)
                    lo, hi = sorted((left.timestamp, right.timestamp))
                    ts.add(abs(rec.node.timestamp - expect) <= TS_MERGE_TOL and lo <= rec.node.timestamp <= hi,
                           (t, rec.node.timestamp, expect))
                    if merges % tome_every == 0:
                        vals, w, _ = oracles.naive_tome(left.tokens.tokens, left.tokens.weights,
                                                        right.tokens.tokens, right.tokens.weights,
                                                        (left.n + right.n) // 2)
                        got = rec.node.tokens
                        ok = (got.n == len(vals) and np.array_equal(got.weights, w)
                              and np.allclose(got.tokens, vals, atol=TOME_TOL, rtol=0))
                        tome.add(ok, (t, rec.index))
                    tracker.merge(rec.index, left.n, right.n)
                else:
                    forest.self_compress()
                merges += 1
            roots_total = sum(r.n for r in forest.roots)
            budget.add(roots_total <= lq and roots_total == forest.total_tokens,
                       (t, roots_total, forest.total_tokens))
        s = snapshot(forest, window)
        stamps = s.timestamps
        snap.add(s.n_tokens <= config.budget and all(a <= b for a, b in zip(stamps, stamps[1:])),
                 (t, s.n_tokens))

    if corrupt == "budget" and forest.roots:
        last = forest.roots[-1]
        extra = type(last)(last.tokens, last.span[1] + 1.0, 0, (last.span[1] + 1.0, last.span[1] + 1.0),
                           np.array([last.span[1] + 1.0]))
        for _ in range(lq // max(1, last.n) + 2):
            forest.roots.append(extra)
    roots_total = sum(r.n for r in forest.roots)
    budget.add(roots_total <= lq and roots_total == forest.total_tokens,
               ("final", roots_total, forest.total_tokens))

    final = tracker.expected_timestamps()
    if corrupt is None:
        for root, want in zip(forest.roots, final):
            ts.add(abs(root.timestamp - want) <= TS_RUN_TOL, ("absorbed", root.timestamp, want))

    report = ValidationReport([
        pair.check("pair_selection_scan"),
        tome.check("tome_grouping"),
        ts.check("timestamp_mean"),
        budget.check("budget_audit"),
        snap.check("snapshot_cap_and_order"),
    ])
    if fifo_ref is not None:
        ref_trace, _ = oracles.oldest_first_trace(fifo_ref, lq)
        got = [(e.index, e.n_out, e.timestamp, e.span) for e in forest.trace]
        report.checks.append(Check("fifo_degeneration", got == ref_trace, f"{len(got)} merges compared"))
    else:
        report.checks.append(Check("fifo_degeneration", None, "weights are not (0, 0, 1)"))
    if sim_ref is not None:
        ok = sim_ref.trace == forest.trace
        report.checks.append(Check("similarity_degeneration", ok, f"{len(forest.trace)} merges compared"))
    else:
        report.checks.append(Check("similarity_degeneration", None, "weights are not (1, 0, 0)"))
    return report
