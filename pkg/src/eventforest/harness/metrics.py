"""Run metrics: compression, retention proxy, event recall."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from ..core import unit_rows

N_BUCKETS = 10


def compression_ratio(snapshot_tokens: int, raw_tokens: int) -> float:
    if raw_tokens <= 0:
        return 0.0
    return 1.0 - snapshot_tokens / raw_tokens


def best_match(frame_means: np.ndarray, snapshot_tokens: Optional[np.ndarray], chunk: int = 1024) -> np.ndarray:
    """For each frame mean, the best cosine against any snapshot token."""
    if snapshot_tokens is None or len(snapshot_tokens) == 0 or len(frame_means) == 0:
        return np.zeros(len(frame_means))
    s = unit_rows(snapshot_tokens)
    f = unit_rows(frame_means)
    out = np.empty(len(f))
    for lo in range(0, len(f), chunk):
        out[lo:lo + chunk] = (f[lo:lo + chunk] @ s.T).max(axis=1)
    return np.clip(out, -1.0, 1.0)


def retention_curve(per_frame: np.ndarray, buckets: int = N_BUCKETS) -> List[Optional[float]]:
    """Mean of ``per_frame`` inside ``buckets`` equal, consecutive time slices."""
    return [float(part.mean()) if len(part) else None
            for part in np.array_split(np.asarray(per_frame, dtype=np.float64), buckets)]


def first_third(per_frame: np.ndarray) -> Optional[float]:
    per_frame = np.asarray(per_frame, dtype=np.float64)
    if len(per_frame) == 0:
        return None
    return float(per_frame[: max(1, len(per_frame) // 3)].mean())


def event_recall(event_spans: Sequence, unit_spans: Sequence) -> float:
    """Fraction of events whose time span intersects at least one retained unit."""
    if not event_spans:
        return 0.0
    units = np.asarray(unit_spans, dtype=np.float64).reshape(-1, 2)
    hit = 0
    for start, end in event_spans:
        if len(units) and ((units[:, 0] <= end) & (units[:, 1] >= start)).any():
            hit += 1
    return hit / len(event_spans)


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


@dataclass
class MetricsRecord:
    policy: str
    weights: List[float]
    total_token_limit: int
    forest_budget: int
    frames: int
    raw_tokens: int
    snapshot_tokens: int
    compression_ratio: float
    max_step_tokens: int
    budget_violations: int
    retention_curve: Optional[List[Optional[float]]]
    retention_first_third: Optional[float]
    event_recall: Optional[float]
    memory_units: int
    update_seconds: float = 0.0
    per_step: List[tuple] = field(default_factory=list, repr=False)

    TIMING_FIELDS = ("update_seconds",)

    def to_dict(self, timing: bool = True) -> dict:
        out = {
            "policy": self.policy,
            "weights": [float(w) for w in self.weights],
            "total_token_limit": int(self.total_token_limit),
            "forest_budget": int(self.forest_budget),
            "frames": int(self.frames),
            "raw_tokens": int(self.raw_tokens),
            "snapshot_tokens": int(self.snapshot_tokens),
            "compression_ratio": _clean(float(self.compression_ratio)),
            "max_step_tokens": int(self.max_step_tokens),
            "budget_violations": int(self.budget_violations),
            "retention_curve": None if self.retention_curve is None
            else [_clean(v) for v in self.retention_curve],
            "retention_first_third": _clean(self.retention_first_third),
            "event_recall": _clean(self.event_recall),
            "memory_units": int(self.memory_units),
        }
        if timing:
            out["timing"] = {"update_seconds": float(self.update_seconds)}
        return out

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), sort_keys=True, indent=2)

    def per_step_csv(self) -> str:
        lines = ["step,time,window_tokens,memory_tokens,snapshot_tokens"]
        for step, t, w, m in self.per_step:
            lines.append(f"{step},{t!r},{w},{m},{w + m}")
        return "\n".join(lines) + "\n"
