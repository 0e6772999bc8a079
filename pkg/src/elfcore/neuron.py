"""Fixed-point LIF dynamics, three-snapshot trace memory and the surrogate LUT."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .errors import ShapeMismatch
from .fixedpoint import FACTOR_ONE, STATE_FMT, factor_raw, mul_factor


class ResetMode(str, enum.Enum):
    SUBTRACT = "subtract"
    ZERO = "zero"


class Snapshot(str, enum.Enum):
    PC_TICK = "pc_tick"
    SAMPLE_END = "sample_end"


@dataclass(frozen=True)
class LayerParams:
    size: int
    v_decay: float = 0.875
    trace_decay: float = 0.875
    threshold: float = 1.0
    reset_mode: ResetMode = ResetMode.SUBTRACT
    pc_delta: int = 4

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("layer size must be positive")
        factor_raw(self.v_decay, "v_decay")
        factor_raw(self.trace_decay, "trace_decay")
        if self.threshold_raw <= 0:
            raise ValueError("threshold must be positive")
        if self.pc_delta < 1:
            raise ValueError("pc_delta must be >= 1")
        object.__setattr__(self, "reset_mode", ResetMode(self.reset_mode))

    @cached_property
    def v_decay_raw(self) -> int:
        return factor_raw(self.v_decay)

    @cached_property
    def trace_decay_raw(self) -> int:
        return factor_raw(self.trace_decay)

    @cached_property
    def threshold_raw(self) -> int:
        return int(STATE_FMT.to_raw(self.threshold))

    @cached_property
    def trace_bound_raw(self) -> int:
        """Raw value of 1/(1 - trace_decay), the trace ceiling."""
        return int(np.ceil(STATE_FMT.one * FACTOR_ONE / (FACTOR_ONE - self.trace_decay_raw)))


@dataclass
class NeuronState:
    v: np.ndarray
    v_pre_reset: np.ndarray
    spiked: np.ndarray
    trace_now: np.ndarray
    trace_pc: np.ndarray
    trace_cc: np.ndarray

    @classmethod
    def zeros(cls, size: int) -> "NeuronState":
        z = lambda: np.zeros(size, dtype=np.int64)  # noqa: E731
        return cls(z(), z(), np.zeros(size, dtype=bool), z(), z(), z())

    @property
    def size(self) -> int:
        return self.v.shape[0]

    def copy(self) -> "NeuronState":
        return NeuronState(*(a.copy() for a in self.arrays()))

    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.v, self.v_pre_reset, self.spiked, self.trace_now, self.trace_pc, self.trace_cc)

    def equals(self, other: "NeuronState") -> bool:
        return all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))


def integrate_step(state: NeuronState, params: LayerParams, current) -> NeuronState:
    """Advance one timestep with a raw Q8.8 input current."""
    current = np.asarray(current, dtype=np.int64)
    if current.shape != (params.size,):
        raise ShapeMismatch(f"current shape {current.shape} != ({params.size},)")
    thr = params.threshold_raw
    v = STATE_FMT.sat(mul_factor(state.v, params.v_decay_raw) + current)
    spiked = v >= thr
    if params.reset_mode is ResetMode.SUBTRACT:
        v_next = np.where(spiked, v - thr, v)
    else:
        v_next = np.where(spiked, 0, v)
    trace = STATE_FMT.sat(mul_factor(state.trace_now, params.trace_decay_raw) + spiked * STATE_FMT.one)
    return NeuronState(v_next, v, spiked, trace, state.trace_pc, state.trace_cc)


def snapshot_traces(state: NeuronState, event: Snapshot) -> NeuronState:
    event = Snapshot(event)
    if event is Snapshot.PC_TICK:
        return replace(state, trace_pc=state.trace_now.copy())
    z = np.zeros_like(state.v)
    # sample reset: everything within-sample clears, the final trace survives as trace_cc
    return NeuronState(z, z.copy(), np.zeros_like(state.spiked), z.copy(), z.copy(), state.trace_now.copy())


def pc_tick_due(step_in_sample: int, pc_delta: int) -> bool:
    """True after the last step of every ``pc_delta``-long window."""
    return (step_in_sample + 1) % pc_delta == 0


class SurrogateShape(str, enum.Enum):
    TRIANGLE = "triangle"
    BOXCAR = "boxcar"


LUT_SIZE = 16
LUT_CENTER = LUT_SIZE // 2


@dataclass(frozen=True)
class SurrogateLUT:
    """16-entry Q0.8 table over ``v - threshold``.

    Node ``k`` sits at offset ``(k - 8) * w / 8``; offsets are rounded half away
    from zero onto the nearest node so lookups are symmetric about threshold.
    """

    entries: tuple[int, ...]
    support_raw: int
    shape: SurrogateShape = SurrogateShape.TRIANGLE

    @classmethod
    def build(cls, threshold_raw: int, shape: SurrogateShape = SurrogateShape.TRIANGLE) -> "SurrogateLUT":
        w = threshold_raw // 2
        if w < 1:
            raise ValueError("threshold too small for a surrogate table")
        shape = SurrogateShape(shape)
        entries = []
        for k in range(LUT_SIZE):
            d = abs(k - LUT_CENTER)
            if shape is SurrogateShape.TRIANGLE:
                entries.append(max(0, FACTOR_ONE * (LUT_CENTER - d) // LUT_CENTER))
            else:
                entries.append(FACTOR_ONE if d < LUT_CENTER else 0)
        return cls(tuple(entries), w, shape)

    @property
    def node_spacing(self) -> float:
        return self.support_raw / LUT_CENTER

    def node_offsets_raw(self) -> np.ndarray:
        """Raw potential offsets of the table nodes (may be fractional)."""
        return (np.arange(LUT_SIZE) - LUT_CENTER) * self.node_spacing

    def index(self, offset_raw) -> np.ndarray:
        x = np.asarray(offset_raw, dtype=np.int64)
        w = self.support_raw
        d = (2 * LUT_CENTER * np.abs(x) + w) // (2 * w)
        return LUT_CENTER + np.where(x < 0, -d, d)

    def lookup(self, offset_raw) -> np.ndarray:
        idx = self.index(offset_raw)
        table = np.asarray(self.entries + (0,), dtype=np.int64)
        inside = (idx >= 0) & (idx < LUT_SIZE)
        return np.where(inside, table[np.clip(idx, 0, LUT_SIZE)], 0)


def surrogate_grad(lut: SurrogateLUT, v, threshold) -> np.ndarray:
    """Raw Q0.8 surrogate derivative at raw potential ``v`` for raw ``threshold``."""
    return lut.lookup(np.asarray(v, dtype=np.int64) - np.int64(threshold))
