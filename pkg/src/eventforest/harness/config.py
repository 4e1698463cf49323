"""Run configuration and the flat ``key = value`` config file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from typing import Optional

from ..baselines import PolicyKind
from ..errors import ConfigError
from ..fstw import WindowConfig
from ..pemf import PenaltyWeights
from ..synth import StreamSpec


@dataclass(frozen=True)
class RunConfig:
    policy: str = "pemf"
    w_s: float = 0.4
    w_m: float = 0.4
    w_t: float = 0.2
    budget: int = 8192  # total token limit: forest + window
    # window; realtime_tokens = 0 means "take it from the stream"
    realtime_tokens: int = 0
    shortterm_frames: int = 18
    shortterm_tokens: int = 128
    local_min_radius: int = 1
    # stream source: a binary file, or the synthetic generator when empty
    stream: str = ""
    seed: int = 0
    num_events: int = 20
    frames_min: int = 8
    frames_max: int = 16
    num_frames: int = 0  # 0 = derived from the per-event range
    dim: int = 64
    tokens_per_frame: int = 256
    cluster_spread: float = 0.05
    event_separation: float = 1.0
    # outputs
    out: str = ""
    per_step: str = ""

    def __post_init__(self):
        try:
            PolicyKind(self.policy)
        except ValueError:
            raise ConfigError(f"unknown policy {self.policy!r}; choose from "
                              f"{', '.join(k.value for k in PolicyKind)}") from None
        try:
            self.weights
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def kind(self) -> PolicyKind:
        return PolicyKind(self.policy)

    @property
    def weights(self) -> PenaltyWeights:
        return PenaltyWeights(self.w_s, self.w_m, self.w_t)

    def stream_spec(self) -> StreamSpec:
        return StreamSpec(
            seed=self.seed, num_events=self.num_events,
            frames_per_event=(self.frames_min, self.frames_max), d=self.dim,
            tokens_per_frame=self.tokens_per_frame, cluster_spread=self.cluster_spread,
            event_separation=self.event_separation, num_frames=self.num_frames or None,
        )

    def window_config(self, tokens_per_frame: Optional[int] = None) -> WindowConfig:
        realtime = self.realtime_tokens or tokens_per_frame or self.tokens_per_frame
        try:
            return WindowConfig(realtime, self.shortterm_frames, self.shortterm_tokens,
                                self.local_min_radius)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def forest_budget(self, tokens_per_frame: Optional[int] = None) -> int:
        lq = self.budget - self.window_config(tokens_per_frame).budget
        if lq <= 0:
            raise ConfigError(f"budget {self.budget} leaves no room for memory after the window "
                              f"({self.window_config(tokens_per_frame).budget} tokens)")
        return lq

    def stream_key(self) -> tuple:
        """Identity of the input stream; configs compared together must agree on it."""
        if self.stream:
            return ("file", self.stream)
        return ("synth", dataclasses.astuple(self.stream_spec()))

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _convert(name: str, raw: str):
    kind = _FIELDS[name].type
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {kind}") from None
    return raw


def normalize_key(key: str) -> str:
    key = key.strip().replace("-", "_")
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    return key


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = line.split("=", 1)
        key = normalize_key(key)
        values[key] = _convert(key, raw.strip())
    return values


def load_config(path=None, **overrides) -> RunConfig:
    """Read a config file (optional) and apply overrides on top."""
    values = {}
    if path:
        try:
            with open(path) as fh:
                values = parse_config_text(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    for key, val in overrides.items():
        if val is not None:
            values[normalize_key(key)] = val
    return RunConfig(**values)


def dump_config(cfg: RunConfig) -> str:
    return "".join(f"{f.name} = {getattr(cfg, f.name)}\n" for f in fields(RunConfig))
