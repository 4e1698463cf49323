"""Drive a stream through the window and one or more memory policies."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np

from ..baselines import MemoryPolicy, make_policy, policy_snapshot
from ..core import TokenMatrix
from ..errors import ConfigError, MismatchedStream
from ..fstw import Window
from ..synth import GroundTruth, iter_frames, ground_truth
from . import metrics as M
from .config import RunConfig
from .streamio import iter_stream, read_header, read_truth


@dataclass
class StreamSource:
    tokens_per_frame: int
    dim: int
    frames: Callable[[], Iterable]
    truth: Optional[GroundTruth]


def open_source(cfg: RunConfig) -> StreamSource:
    if cfg.stream:
        _, tokens, dim = read_header(cfg.stream)
        return StreamSource(tokens, dim, lambda: iter_stream(cfg.stream), read_truth(cfg.stream))
    spec = cfg.stream_spec()
    return StreamSource(spec.tokens_per_frame, spec.d, lambda: iter_frames(spec), ground_truth(spec))


def _check_shared(configs: Sequence[RunConfig]) -> None:
    if not configs:
        raise ConfigError("no configurations given")
    first = configs[0]
    for c in configs[1:]:
        if c.stream_key() != first.stream_key():
            raise MismatchedStream("configurations read different streams")
        if (c.budget, c.window_config()) != (first.budget, first.window_config()):
            raise MismatchedStream("configurations use different token budgets or windows")


def run_many(configs: Sequence[RunConfig], *, retention: bool = True, per_step: bool = False,
             keep_trace: bool = False, on_step: Optional[Callable] = None,
             source: Optional[StreamSource] = None):
    """Run several policies in lockstep over one stream.

    The window does not depend on the policy, so one window feeds every
    policy the same nodes; each policy keeps its own isolated state.
    Returns ``(records, policies, window)``.
    """
    _check_shared(configs)
    src = source or open_source(configs[0])
    wcfg = configs[0].window_config(src.tokens_per_frame)
    limit = configs[0].budget
    lq = configs[0].forest_budget(src.tokens_per_frame)
    window = Window(wcfg)
    policies: List[MemoryPolicy] = [make_policy(c.kind, lq, c.weights, keep_trace) for c in configs]
    elapsed = [0.0] * len(configs)
    max_tokens = [0] * len(configs)
    violations = [0] * len(configs)
    steps = [[] for _ in configs]
    means = []
    n_frames = 0

    for t, frame in src.frames():
        tm = TokenMatrix.from_array(frame)
        if retention:
            means.append(tm.mean())
        t0 = time.perf_counter()
        emitted = window.ingest(tm, t)
        t_window = time.perf_counter() - t0
        w_tokens = window.token_count()
        for p, policy in enumerate(policies):
            t0 = time.perf_counter()
            for node in emitted:
                policy.update(node, t)
            elapsed[p] += t_window + time.perf_counter() - t0
            m_tokens = policy.token_count()
            total = w_tokens + m_tokens
            max_tokens[p] = max(max_tokens[p], total)
            if total > limit:
                violations[p] += 1
            if per_step:
                steps[p].append((n_frames, t, w_tokens, m_tokens))
        if on_step is not None:
            on_step(n_frames, t, window, policies)
        n_frames += 1

    raw = n_frames * src.tokens_per_frame
    frame_means = np.array(means) if retention and means else None
    records = []
    for p, (cfg, policy) in enumerate(zip(configs, policies)):
        snap = policy_snapshot(policy, window)
        curve = third = None
        if frame_means is not None:
            tokens = snap.tokens()
            per_frame = M.best_match(frame_means, None if tokens is None else tokens.tokens)
            curve, third = M.retention_curve(per_frame), M.first_third(per_frame)
        recall = None
        if src.truth is not None:
            recall = M.event_recall(src.truth.event_spans, [u.span for u in policy.units])
        records.append(M.MetricsRecord(
            policy=cfg.policy, weights=list(cfg.weights.as_tuple()), total_token_limit=limit,
            forest_budget=lq, frames=n_frames, raw_tokens=raw, snapshot_tokens=snap.n_tokens,
            compression_ratio=M.compression_ratio(snap.n_tokens, raw),
            max_step_tokens=max_tokens[p], budget_violations=violations[p],
            retention_curve=curve, retention_first_third=third, event_recall=recall,
            memory_units=len(policy.units), update_seconds=elapsed[p], per_step=steps[p],
        ))
    return records, policies, window


def run(config: RunConfig, **kwargs) -> M.MetricsRecord:
    """Run one configuration; writes ``config.out`` / ``config.per_step`` when set."""
    records, _, _ = run_many([config], per_step=bool(config.per_step), **kwargs)
    record = records[0]
    if config.out:
        with open(config.out, "w") as fh:
            fh.write(record.to_json() + "\n")
    if config.per_step:
        with open(config.per_step, "w") as fh:
            fh.write(record.per_step_csv())
    return record


COLUMNS = ["policy", "w_s", "w_m", "w_t", "compression_ratio", "event_recall",
           "retention_first_third"] + [f"retention_{k}" for k in range(M.N_BUCKETS)]


class ComparisonTable:
    def __init__(self, records: Sequence[M.MetricsRecord]):
        self.records = list(records)

    @property
    def rows(self) -> List[list]:
        out = []
        for r in self.records:
            curve = r.retention_curve or [None] * M.N_BUCKETS
            out.append([r.policy, *r.weights, r.compression_ratio, r.event_recall,
                        r.retention_first_third, *curve])
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in self.rows:
            writer.writerow(["" if v is None else (f"{v:.6f}" if isinstance(v, float) else v) for v in row])
        return buf.getvalue()

    def to_text(self) -> str:
        cells = [COLUMNS] + [["-" if v is None else (f"{v:.4f}" if isinstance(v, float) else str(v))
                              for v in row] for row in self.rows]
        widths = [max(len(r[k]) for r in cells) for k in range(len(COLUMNS))]
        return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells) + "\n"


def compare(configs: Sequence[RunConfig], **kwargs) -> ComparisonTable:
    """One row per configuration, all run over the same stream and budgets."""
    records, _, _ = run_many(configs, **kwargs)
    return ComparisonTable(records)
