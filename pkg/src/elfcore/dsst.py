"""Dynamic structured sparse training: periodic N:M prune/regrow.

Regrowth candidates for row ``j`` in group ``g`` are scored by
``|post_grad_i| * |pre_act_j|``.  The presynaptic factor is shared by the whole
row, so ranking collapses to one sort of the group's post-gradients, reused for
every row.  :func:`dense_oracle_rank` materializes the full score table and is
kept only for verification.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import InsufficientCandidates, ShapeMismatch
from .fixedpoint import sat_acc
from .sparse import (
    HeapProbe,
    MaskStats,
    NMGroupSpec,
    SparseWeightBank,
    apply_mask_update,
    bounded_smallest,
    select_k_smallest,
)


class Decay(str, enum.Enum):
    COSINE = "cosine"
    CONSTANT = "constant"


@dataclass(frozen=True)
class DsstSchedule:
    period: int | None = 100
    prune_fraction_0: float = 0.3
    decay: Decay = Decay.COSINE
    end_step: int = 10_000

    def __post_init__(self):
        if self.period is not None and self.period < 1:
            raise ValueError("period must be >= 1 (or None for a static mask)")
        if not 0 <= self.prune_fraction_0 <= 1:
            raise ValueError("prune_fraction_0 must lie in [0, 1]")
        if self.end_step < 1:
            raise ValueError("end_step must be >= 1")
        object.__setattr__(self, "decay", Decay(self.decay))

    @property
    def enabled(self) -> bool:
        return self.period is not None

    def due(self, cycle: int) -> bool:
        return self.enabled and cycle > 0 and cycle % self.period == 0

    def prune_fraction(self, t: int) -> float:
        if t >= self.end_step:
            return 0.0
        if self.decay is Decay.CONSTANT:
            return self.prune_fraction_0
        return self.prune_fraction_0 * 0.5 * (1.0 + math.cos(math.pi * t / self.end_step))

    def k(self, t: int, n_keep: int) -> int:
        return min(n_keep, math.ceil(self.prune_fraction(t) * n_keep))


@dataclass
class GradientBuffer:
    """Windowed accumulators for the factorized regrowth score."""

    post_grad: np.ndarray
    pre_act: np.ndarray
    cycles: int = 0
    probe: HeapProbe = field(default_factory=HeapProbe, repr=False)
    _shortlists: dict = field(default_factory=dict, repr=False)

    @classmethod
    def zeros(cls, n_pre: int, n_post: int) -> "GradientBuffer":
        return cls(np.zeros(n_post, dtype=np.int64), np.zeros(n_pre, dtype=np.int64))

    def clear(self) -> None:
        self.post_grad[:] = 0
        self.pre_act[:] = 0
        self.cycles = 0
        self._shortlists.clear()

    def shortlist(self, spec: NMGroupSpec, g: int, depth: int) -> list[int]:
        """Top-``depth`` offsets of group ``g`` by |post_grad|, ties to lower offset.

        Built once per (group, depth) through a bounded heap and cached until
        the buffer changes.
        """
        key = (g, depth)
        if key not in self._shortlists:
            m = spec.m_total
            mags = np.abs(self.post_grad[g * m:(g + 1) * m]).tolist()
            self._shortlists[key] = bounded_smallest(
                range(m), depth, key=lambda o: (-mags[o], o), probe=self.probe)
        return self._shortlists[key]


def accumulate(buf: GradientBuffer, post_grad, pre_trace) -> GradientBuffer:
    post_grad = np.asarray(post_grad, dtype=np.int64)
    pre_trace = np.asarray(pre_trace, dtype=np.int64)
    if post_grad.shape != buf.post_grad.shape or pre_trace.shape != buf.pre_act.shape:
        raise ShapeMismatch("accumulator shapes do not match the layer")
    buf.post_grad[:] = sat_acc(buf.post_grad + post_grad)
    buf.pre_act[:] = sat_acc(buf.pre_act + pre_trace)
    buf.cycles += 1
    buf._shortlists.clear()
    return buf


def _check_candidates(spec: NMGroupSpec, active: set, k: int) -> None:
    if k < 0 or k > spec.m_total - len(active):
        raise InsufficientCandidates(
            f"k={k} but only {spec.m_total - len(active)} inactive offsets in the group")


def rank_regrowth(buf: GradientBuffer, spec: NMGroupSpec, g: int, j: int, active: Iterable[int],
                  k: int) -> list[int]:
    """``k`` inactive offsets with the largest factorized gradient score."""
    active = set(int(a) for a in active)
    _check_candidates(spec, active, k)
    if k == 0:
        return []
    if buf.pre_act[j] == 0:
        # every score is zero: the tie rule picks the lowest free offsets
        return [o for o in range(spec.m_total) if o not in active][:k]
    depth = min(spec.m_total, max(spec.n_keep, len(active) + k))
    picked = [o for o in buf.shortlist(spec, g, depth) if o not in active]
    return picked[:k]


def dense_oracle_rank(buf: GradientBuffer, spec: NMGroupSpec, g: int, j: int, active: Iterable[int],
                      k: int) -> list[int]:
    """Reference ranking over the full candidate score table."""
    active = set(int(a) for a in active)
    _check_candidates(spec, active, k)
    m = spec.m_total
    pa = abs(int(buf.pre_act[j]))
    scores = [(abs(int(buf.post_grad[g * m + o])) * pa, o) for o in range(m) if o not in active]
    scores.sort(key=lambda s: (-s[0], s[1]))
    return [o for _, o in scores[:k]]


def _dsst_group(bank: SparseWeightBank, buf: GradientBuffer, g: int, k: int) -> int:
    """Prune/regrow every row of one group in place; returns the number of new connections."""
    spec = bank.spec
    n_pre, n, m = bank.n_pre, spec.n_keep, spec.m_total
    idx = bank.indices[:, g]
    val = bank.values[:, g]
    rows = np.arange(n_pre)[:, None]

    order = np.argsort(np.abs(val), axis=-1, kind="stable")
    pruned = np.zeros((n_pre, n), dtype=bool)
    np.put_along_axis(pruned, order[:, :k], True, axis=1)

    old_full = np.zeros((n_pre, m), dtype=bool)
    old_full[rows, idx] = True
    surv = np.zeros((n_pre, m), dtype=bool)
    surv[rows, idx] = ~pruned

    regrow = np.zeros((n_pre, m), dtype=bool)
    live = buf.pre_act != 0
    if live.any():
        short = np.asarray(buf.shortlist(spec, g, n), dtype=np.int64)
        free = ~surv[np.flatnonzero(live)][:, short]
        take = free & (np.cumsum(free, axis=1) <= k)
        sub = np.zeros((int(live.sum()), m), dtype=bool)
        sub[:, short] = take
        regrow[live] = sub
    if (~live).any():
        free = ~surv[~live]
        regrow[~live] = free & (np.cumsum(free, axis=1) <= k)

    old_vals = np.zeros((n_pre, m), dtype=np.int64)
    old_vals[rows, idx] = val
    new_mask = surv | regrow
    # a pruned weight that wins the regrowth ranking keeps its value
    new_vals = np.where(surv | (regrow & old_full), old_vals, 0)
    bank.indices[:, g] = np.nonzero(new_mask)[1].reshape(n_pre, n)
    bank.values[:, g] = new_vals[new_mask].reshape(n_pre, n)
    return int((new_mask & ~old_full).sum())


def dsst_event(bank: SparseWeightBank, buf: GradientBuffer, spec: NMGroupSpec, sched: DsstSchedule,
               t: int, executor: Executor | None = None) -> tuple[SparseWeightBank, MaskStats]:
    """One prune/regrow pass over every (row, group) cell at training cycle ``t``."""
    if spec != bank.spec:
        raise ShapeMismatch("group spec does not match the bank")
    k = sched.k(t, spec.n_keep)
    changed = 0
    if k > 0:
        groups = range(spec.group_count)
        if executor is None:
            changed = sum(_dsst_group(bank, buf, g, k) for g in groups)
        else:
            # shortlists are cached up front so workers only read the buffer
            for g in groups:
                if buf.pre_act.any():
                    buf.shortlist(spec, g, spec.n_keep)
            changed = sum(executor.map(lambda g: _dsst_group(bank, buf, g, k), groups))
    buf.clear()
    total = bank.n_pre * spec.group_count * spec.n_keep
    return bank, MaskStats.of(bank, churn=changed / total)


def dsst_event_reference(bank: SparseWeightBank, buf: GradientBuffer, spec: NMGroupSpec,
                         sched: DsstSchedule, t: int, probe: HeapProbe | None = None
                         ) -> tuple[SparseWeightBank, MaskStats]:
    """Cell-by-cell path built from the scalar store operations."""
    k = sched.k(t, spec.n_keep)
    changed = 0
    if k > 0:
        for g in range(spec.group_count):
            for j in range(bank.n_pre):
                pruned = select_k_smallest(bank, j, g, k, probe=probe)
                prune_offsets = {o for o, _ in pruned}
                survivors = set(bank.indices[j, g].tolist()) - prune_offsets
                grown = rank_regrowth(buf, spec, g, j, survivors, k)
                kept = prune_offsets & set(grown)
                prune = sorted(prune_offsets - kept)
                regrow = [(o, 0) for o in grown if o not in kept]
                apply_mask_update(bank, j, g, prune, regrow)
                changed += len(regrow)
    buf.clear()
    total = bank.n_pre * spec.group_count * spec.n_keep
    return bank, MaskStats.of(bank, churn=changed / total)
