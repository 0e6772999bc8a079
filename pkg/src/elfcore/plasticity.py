"""Layer-local OSSL updates, IA/SS weight-update gating and the output delta rule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import LabelOutOfRange, LengthMismatch, ShapeMismatch
from .fixedpoint import (
    FACTOR_FRAC,
    RATE_FRAC,
    STATE_FMT,
    WEIGHT_FMT,
    rate_raw,
    shift_round,
)
from .neuron import NeuronState, SurrogateLUT, surrogate_grad
from .sparse import SparseWeightBank

SS_FRAC = 8
SS_ONE = 1 << SS_FRAC


@dataclass(frozen=True)
class LearnConfig:
    eta_ossl: float = 0.004
    eta_sl: float = 0.02
    margin_pos: float = 0.0
    margin_neg: float = 0.0
    ema_rate: float = 0.05
    ia_threshold: int = 1
    gating: bool = True

    def __post_init__(self):
        if self.eta_ossl <= 0 or self.eta_sl <= 0:
            raise ValueError("learning rates must be positive")
        if not (0 <= self.margin_pos <= 1 and 0 <= self.margin_neg <= 1):
            raise ValueError("margins must lie in [0, 1]")
        if not 0 < self.ema_rate <= 1:
            raise ValueError("ema_rate must lie in (0, 1]")
        if self.ia_threshold < 0:
            raise ValueError("ia_threshold must be >= 0")


@dataclass
class GateState:
    """Per-layer adaptive SS thresholds and update counters."""

    ss_ema_pos: np.ndarray
    ss_ema_neg: np.ndarray
    performed: np.ndarray = field(default=None)
    skipped_ia: np.ndarray = field(default=None)
    skipped_ss: np.ndarray = field(default=None)
    pc_updates: np.ndarray = field(default=None)
    cc_updates: np.ndarray = field(default=None)

    def __post_init__(self):
        n = len(self.ss_ema_pos)
        for name in ("performed", "skipped_ia", "skipped_ss", "pc_updates", "cc_updates"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(n, dtype=np.int64))

    @classmethod
    def initial(cls, n_layers: int) -> "GateState":
        return cls(np.zeros(n_layers), np.zeros(n_layers))

    @property
    def n_layers(self) -> int:
        return len(self.ss_ema_pos)

    def copy(self) -> "GateState":
        return GateState(*(np.array(getattr(self, f)) for f in
                           ("ss_ema_pos", "ss_ema_neg", "performed", "skipped_ia",
                            "skipped_ss", "pc_updates", "cc_updates")))


class UpdateDecision(NamedTuple):
    do_pc: bool
    do_cc: bool
    skipped_by_ia: bool = False

    @property
    def any(self) -> bool:
        return self.do_pc or self.do_cc


FULL_SKIP = UpdateDecision(False, False, True)
ALWAYS = UpdateDecision(True, True, False)


def similarity_raw(a, b) -> int:
    """Cosine similarity of two raw trace vectors in Q.8, computed in integers."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if a.shape != b.shape:
        raise LengthMismatch(f"lengths differ: {a.shape} vs {b.shape}")
    na = int(a @ a)
    nb = int(b @ b)
    if na == 0 or nb == 0:
        return 0
    dot = int(a @ b)
    den = math.isqrt(na * nb)
    mag = (2 * SS_ONE * abs(dot) + den) // (2 * den)
    return min(SS_ONE, mag) * (1 if dot >= 0 else -1)


def similarity_score(a, b) -> float:
    return similarity_raw(a, b) / SS_ONE


def gate_decision(ia: int, ss_pos: float, ss_neg: float, gates: GateState, cfg: LearnConfig,
                  layer: int) -> UpdateDecision:
    if not cfg.gating:
        return ALWAYS
    if ia < cfg.ia_threshold:
        return FULL_SKIP
    do_pc = ss_pos < gates.ss_ema_pos[layer] + cfg.margin_pos
    do_cc = ss_neg > gates.ss_ema_neg[layer] - cfg.margin_neg
    return UpdateDecision(bool(do_pc), bool(do_cc), False)


def update_gate_state(gates: GateState, layer: int, ss_pos: float, ss_neg: float, cfg: LearnConfig,
                      decision: UpdateDecision | None = None) -> GateState:
    """EMA step toward the latest scores; IA-skipped steps only touch the counters."""
    if decision is None or not decision.skipped_by_ia:
        r = cfg.ema_rate
        gates.ss_ema_pos[layer] = (1.0 - r) * gates.ss_ema_pos[layer] + r * ss_pos
        gates.ss_ema_neg[layer] = (1.0 - r) * gates.ss_ema_neg[layer] + r * ss_neg
    if decision is not None:
        if decision.skipped_by_ia:
            gates.skipped_ia[layer] += 1
        elif decision.any:
            gates.performed[layer] += 1
            gates.pc_updates[layer] += decision.do_pc
            gates.cc_updates[layer] += decision.do_cc
        else:
            gates.skipped_ss[layer] += 1
    return gates


def modulator(post: NeuronState, decision: UpdateDecision, ss_pos: float) -> np.ndarray:
    """Raw Q8.8 per-neuron modulator: PC pull toward the delayed snapshot, CC push from the last sample."""
    m = np.zeros(post.size, dtype=np.int64)
    if decision.do_pc:
        ss = int(round(ss_pos * SS_ONE))
        m += post.trace_pc - shift_round(post.trace_now * ss, SS_FRAC)
    if decision.do_cc:
        m -= post.trace_cc
    return STATE_FMT.sat(m)


# Δw frac bits: rate(16) + modulator(8) + surrogate(8) + trace(8) -> weight(7)
_OSSL_SHIFT = RATE_FRAC + STATE_FMT.frac + FACTOR_FRAC + STATE_FMT.frac - WEIGHT_FMT.frac


def ossl_update(bank: SparseWeightBank, pre_trace, post: NeuronState, decision: UpdateDecision,
                lut: SurrogateLUT, cfg: LearnConfig, *, ss_pos: float, threshold_raw: int,
                groups: Sequence[int] | None = None) -> tuple[SparseWeightBank, np.ndarray]:
    """Three-factor update of the active weights of one layer, in place.

    Returns the bank and the per-neuron post-gradient ``m_i * sg(v_i)`` (raw
    Q8.16) for DSST accumulation.  ``groups`` restricts the update to a subset
    of the layer's N:M groups (per-group workers).
    """
    pre_trace = np.asarray(pre_trace, dtype=np.int64)
    if pre_trace.shape != (bank.n_pre,) or post.size != bank.n_post:
        raise ShapeMismatch(
            f"bank is {bank.n_pre}x{bank.n_post}, got pre {pre_trace.shape} and post {post.size}")
    g_post = np.zeros(bank.n_post, dtype=np.int64)
    if not decision.any:
        return bank, g_post
    m = modulator(post, decision, ss_pos)
    g_post = m * surrogate_grad(lut, post.v_pre_reset, threshold_raw)
    rows = np.flatnonzero(pre_trace)
    if rows.size == 0 or not g_post.any():
        return bank, g_post
    pre = pre_trace[rows, None, None] * rate_raw(cfg.eta_ossl)
    if groups is None:
        coef = g_post[bank.indices[rows] + bank.group_base]
        delta = shift_round(coef * pre, _OSSL_SHIFT)
        bank.values[rows] = WEIGHT_FMT.sat(bank.values[rows] + delta)
    else:
        for g in groups:
            coef = g_post[bank.indices[rows, g] + g * bank.spec.m_total]
            delta = shift_round(coef * pre[:, 0], _OSSL_SHIFT)
            bank.values[rows, g] = WEIGHT_FMT.sat(bank.values[rows, g] + delta)
    return bank, g_post


# Δw frac bits: rate(16) + error(8) + trace(8) -> weight(7)
_SL_SHIFT = RATE_FRAC + SS_FRAC + STATE_FMT.frac - WEIGHT_FMT.frac


def normalized_output(out_trace, trace_bound_raw: int) -> np.ndarray:
    """Output trace scaled to [0, 1] as raw Q.8."""
    y = (np.asarray(out_trace, dtype=np.int64) * SS_ONE) // int(trace_bound_raw)
    return np.clip(y, 0, SS_ONE)


def sl_update(weights, pre_trace, out_trace, label: int, cfg: LearnConfig, trace_bound_raw: int):
    """Delta rule on the output layer: ``Δw_oj = eta · (onehot_o - y_o) · pre_j``.

    ``weights`` is either a dense raw ``(n_pre, n_out)`` array (updated in
    place) or a :class:`SparseWeightBank`, in which case only stored
    connections change.
    """
    pre_trace = np.asarray(pre_trace, dtype=np.int64)
    n_out = weights.n_post if isinstance(weights, SparseWeightBank) else weights.shape[1]
    if not 0 <= label < n_out:
        raise LabelOutOfRange(f"label {label} outside [0, {n_out})")
    target = np.zeros(n_out, dtype=np.int64)
    target[label] = SS_ONE
    err = target - normalized_output(out_trace, trace_bound_raw)
    rows = np.flatnonzero(pre_trace)
    if rows.size == 0 or not err.any():
        return weights
    eta = rate_raw(cfg.eta_sl)
    if isinstance(weights, SparseWeightBank):
        if pre_trace.shape != (weights.n_pre,):
            raise ShapeMismatch("pre_trace length does not match bank rows")
        mm = weights.spec.m_total
        for g in range(weights.spec.group_count):
            coef = err[weights.indices[rows, g] + g * mm]
            delta = shift_round(coef * (pre_trace[rows, None] * eta), _SL_SHIFT)
            weights.values[rows, g] = WEIGHT_FMT.sat(weights.values[rows, g] + delta)
        return weights
    if pre_trace.shape != (weights.shape[0],):
        raise ShapeMismatch("pre_trace length does not match weight rows")
    delta = shift_round(np.outer(pre_trace[rows] * eta, err), _SL_SHIFT)
    weights[rows] = WEIGHT_FMT.sat(weights[rows] + delta)
    return weights
