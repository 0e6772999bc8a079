"""Run configuration: INI-style sections, documented defaults, CLI overrides."""

from __future__ import annotations

import configparser
import dataclasses
import enum
import math
import os
from dataclasses import dataclass, field, fields

from .dsst import Decay, DsstSchedule
from .errors import ConfigError
from .neuron import LayerParams, ResetMode
from .plasticity import LearnConfig
from .sparse import NMGroupSpec


class Mode(str, enum.Enum):
    TRAIN_OSSL = "train-ossl"
    TRAIN_SL_ONLY = "train-sl-only"
    INFERENCE = "inference"


# section -> keys; every RunConfig field lives in exactly one section
SECTIONS = {
    "network": ("input_width", "hidden_sizes", "output_size", "bypass", "sparsity", "group_count",
                "weight_gain", "readout_scale", "output_sparse", "delay_taps"),
    "neuron": ("v_decay", "trace_decay", "threshold", "output_threshold", "reset_mode", "pc_delta",
               "surrogate"),
    "learning": ("eta_ossl", "eta_sl", "margin_pos", "margin_neg", "ema_rate", "ia_threshold", "gating"),
    "dsst": ("dsst_period", "prune_fraction", "dsst_decay", "dsst_end_fraction"),
    "run": ("seed", "mode", "epochs", "parallel", "eval_every"),
}


@dataclass
class RunConfig:
    # network
    input_width: int = 512
    hidden_sizes: tuple[int, ...] = (256, 256)
    output_size: int = 8
    bypass: tuple[bool, ...] = (True, True)
    sparsity: float = 0.8
    group_count: int = 4
    weight_gain: float = 8.0  # init scale = gain / sqrt(expected fan-in)
    readout_scale: float = 0.05
    output_sparse: bool = False
    delay_taps: tuple[bool, ...] = (True, False, False, False)
    # neuron
    v_decay: float = 0.875
    trace_decay: float = 0.875
    threshold: float = 0.5
    output_threshold: float = 1.0
    reset_mode: ResetMode = ResetMode.SUBTRACT
    pc_delta: int = 4
    surrogate: str = "triangle"
    # learning
    eta_ossl: float = 0.004
    eta_sl: float = 0.02
    margin_pos: float = 0.0
    margin_neg: float = 0.0
    ema_rate: float = 0.05
    ia_threshold: int = 1
    gating: bool = True
    # dsst; period None = static mask; end fraction is of the total training cycles
    dsst_period: int | None = 100
    prune_fraction: float = 0.3
    dsst_decay: Decay = Decay.COSINE
    dsst_end_fraction: float = 0.5
    # run
    seed: int = 0
    mode: Mode = Mode.TRAIN_OSSL
    epochs: int = 3
    parallel: bool = False
    eval_every: int = 1

    def __post_init__(self):
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        self.bypass = tuple(bool(b) for b in self.bypass)
        self.delay_taps = tuple(bool(t) for t in self.delay_taps)
        self.reset_mode = ResetMode(self.reset_mode)
        self.dsst_decay = Decay(self.dsst_decay)
        self.mode = Mode(self.mode)
        self.validate()

    def validate(self) -> None:
        if self.input_width < 1 or self.output_size < 1:
            raise ConfigError("input_width and output_size must be positive")
        if len(self.bypass) != len(self.hidden_sizes):
            raise ConfigError(f"need one bypass flag per hidden layer ({len(self.hidden_sizes)})")
        if not 0.0 <= self.sparsity < 1.0:
            raise ConfigError("sparsity must lie in [0, 1)")
        if len(self.delay_taps) != 4:
            raise ConfigError("delay_taps needs exactly 4 flags")
        for h in self.hidden_sizes:
            if h % self.group_count:
                raise ConfigError(f"hidden size {h} not divisible by group_count {self.group_count}")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        try:
            self.layer_params(0) if self.hidden_sizes else None
            self.output_params()
            self.learn_config()
            self.schedule(1)
            for i in range(len(self.hidden_sizes)):
                self.group_spec(i)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(str(exc)) from exc

    # derived parameter objects
    def layer_params(self, i: int) -> LayerParams:
        return LayerParams(self.hidden_sizes[i], self.v_decay, self.trace_decay, self.threshold,
                           self.reset_mode, self.pc_delta)

    def input_params(self) -> LayerParams:
        return LayerParams(self.input_width, self.v_decay, self.trace_decay, self.threshold,
                           self.reset_mode, self.pc_delta)

    def output_params(self) -> LayerParams:
        return LayerParams(self.output_size, self.v_decay, self.trace_decay, self.output_threshold,
                           self.reset_mode, self.pc_delta)

    def group_spec(self, i: int) -> NMGroupSpec:
        return NMGroupSpec.for_layer(self.hidden_sizes[i], self.sparsity, self.group_count)

    def learn_config(self) -> LearnConfig:
        return LearnConfig(self.eta_ossl, self.eta_sl, self.margin_pos, self.margin_neg, self.ema_rate,
                           self.ia_threshold, self.gating)

    def schedule(self, total_cycles: int) -> DsstSchedule:
        end = max(1, int(self.dsst_end_fraction * total_cycles))
        return DsstSchedule(self.dsst_period, self.prune_fraction, self.dsst_decay, end)

    def layer_sizes(self) -> list[int]:
        return [self.input_width, *self.hidden_sizes]

    # serialization
    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, enum.Enum):
                v = v.value
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    def persist_dict(self) -> dict:
        """Model-defining fields only; execution options such as ``parallel`` are dropped."""
        d = self.to_dict()
        d.pop("parallel")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _parse_value(name: str, raw: str):
    raw = raw.strip()
    t = _TYPES[name]
    try:
        if t.startswith("tuple[int"):
            return tuple(int(x) for x in raw.replace(",", " ").split()) if raw else ()
        if t.startswith("tuple[bool"):
            return tuple(_parse_bool(x) for x in raw.replace(",", " ").split()) if raw else ()
        if t == "bool":
            return _parse_bool(raw)
        if t == "int | None":
            return None if raw.lower() in ("none", "inf", "infinity", "off") else int(raw)
        if t == "int":
            return int(raw)
        if t == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def _parse_bool(raw: str) -> bool:
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(raw)


def load_config(path: str | os.PathLike | None = None, **overrides) -> RunConfig:
    """Read an INI file (sections per :data:`SECTIONS`) and apply keyword overrides."""
    values: dict = {}
    if path is not None:
        cp = configparser.ConfigParser()
        try:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for section in cp.sections():
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]")
            for key, raw in cp.items(section):
                if key not in SECTIONS[section]:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                values[key] = _parse_value(key, raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_dict(values)


def dump_config(cfg: RunConfig) -> str:
    d = cfg.to_dict()
    lines = []
    for section, keys in SECTIONS.items():
        lines.append(f"[{section}]")
        for k in keys:
            v = d[k]
            if isinstance(v, list):
                v = ", ".join(str(int(x)) if isinstance(x, bool) else str(x) for x in v)
            elif v is None:
                v = "none"
            lines.append(f"{k} = {v}")
        lines.append("")
    return "\n".join(lines)
