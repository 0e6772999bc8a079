"""Saturating fixed-point helpers.

All fixed-point quantities are carried as raw integers in int64 numpy arrays
and clipped to the range of their declared format after every operation.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class QFormat:
    """Signed two's-complement format with ``bits`` total and ``frac`` fractional bits."""

    bits: int
    frac: int

    @cached_property
    def lo(self) -> int:
        return -(1 << (self.bits - 1))

    @cached_property
    def hi(self) -> int:
        return (1 << (self.bits - 1)) - 1

    @property
    def one(self) -> int:
        return 1 << self.frac

    @property
    def ulp(self) -> float:
        return 1.0 / self.one

    def sat(self, raw):
        return np.minimum(np.maximum(raw, self.lo), self.hi)

    def to_raw(self, x):
        """Round-to-nearest (half away from zero) then saturate."""
        x = np.asarray(x, dtype=np.float64) * self.one
        r = np.sign(x) * np.floor(np.abs(x) + 0.5)
        return self.sat(r.astype(np.int64))

    def to_float(self, raw):
        return np.asarray(raw, dtype=np.float64) / self.one

    @property
    def storage_dtype(self):
        for dt in (np.int8, np.int16, np.int32, np.int64):
            if np.iinfo(dt).bits >= self.bits:
                return dt
        raise ValueError(f"no storage type for {self.bits} bits")


# v and traces: Q8.8 in 16 bits; weights: Q1.7 in 8 bits.
STATE_FMT = QFormat(16, 8)
WEIGHT_FMT = QFormat(8, 7)
# decay factors and surrogate values are unsigned Q0.8 multipliers
FACTOR_FRAC = 8
FACTOR_ONE = 1 << FACTOR_FRAC
# learning rates carry 16 fractional bits
RATE_FRAC = 16

ACC_LIMIT = (1 << 31) - 1


def factor_raw(x: float, name: str = "factor") -> int:
    """Quantize a multiplicative factor in [0, 1) to Q0.8."""
    raw = int(round(x * FACTOR_ONE))
    if not 0 <= raw < FACTOR_ONE:
        raise ValueError(f"{name}={x} outside [0, 1) after quantization")
    return raw


def rate_raw(x: float) -> int:
    return int(round(x * (1 << RATE_FRAC)))


def mul_factor(raw, factor: int):
    """Multiply by a Q0.8 factor, flooring toward -inf (arithmetic shift)."""
    return (np.asarray(raw, dtype=np.int64) * factor) >> FACTOR_FRAC


def shift_round(x, shift: int):
    """Divide by ``2**shift`` rounding half away from zero."""
    x = np.asarray(x, dtype=np.int64)
    if shift <= 0:
        return x << (-shift)
    half = np.int64(1) << (shift - 1)
    mag = (np.abs(x) + half) >> shift
    return np.where(x < 0, -mag, mag)


def sat_acc(x):
    """Clip an accumulator to the signed 32-bit range."""
    return np.minimum(np.maximum(x, -ACC_LIMIT), ACC_LIMIT)
