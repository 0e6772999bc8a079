"""N:M group-structured sparse weight memory.

Groups partition the postsynaptic neurons of a layer into ``group_count``
contiguous blocks of ``M`` neurons.  Every presynaptic row ``j`` holds exactly
``N`` active connections inside every group, stored as sorted offsets in
``[0, M)`` with their fixed-point weights.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    CardinalityMismatch,
    IndexOutOfRange,
    InvalidSpec,
    KTooLarge,
    PruneNotActive,
    RegrowCollision,
)
from .fixedpoint import WEIGHT_FMT


@dataclass(frozen=True)
class NMGroupSpec:
    n_keep: int
    m_total: int
    group_count: int = 4

    def __post_init__(self):
        if not 1 <= self.n_keep <= self.m_total:
            raise InvalidSpec(f"need 1 <= N <= M, got N={self.n_keep}, M={self.m_total}")
        if self.group_count < 1:
            raise InvalidSpec("group_count must be >= 1")

    @classmethod
    def for_layer(cls, post_size: int, sparsity: float, group_count: int = 4) -> "NMGroupSpec":
        """Derive N and M from a target sparsity: ``M = post/groups``, ``N = round((1-s)·M)``."""
        if post_size % group_count:
            raise InvalidSpec(f"layer size {post_size} not divisible by {group_count} groups")
        m = post_size // group_count
        n = int(round((1.0 - sparsity) * m))
        return cls(max(1, min(m, n)), m, group_count)

    @property
    def post_size(self) -> int:
        return self.group_count * self.m_total

    @property
    def sparsity(self) -> float:
        return 1.0 - self.n_keep / self.m_total


@dataclass
class SparseWeightBank:
    spec: NMGroupSpec
    indices: np.ndarray  # (n_pre, groups, N) offsets in [0, M), ascending
    values: np.ndarray  # (n_pre, groups, N) raw weights

    @property
    def group_base(self) -> np.ndarray:
        """Offset of each group's first postsynaptic neuron, broadcastable over (rows, G, N)."""
        return (np.arange(self.spec.group_count) * self.spec.m_total)[:, None]

    @property
    def n_pre(self) -> int:
        return self.indices.shape[0]

    @property
    def n_post(self) -> int:
        return self.spec.post_size

    def copy(self) -> "SparseWeightBank":
        return SparseWeightBank(self.spec, self.indices.copy(), self.values.copy())

    def post_index(self) -> np.ndarray:
        """Global postsynaptic index of every stored connection, shape (n_pre, G*N)."""
        base = (np.arange(self.spec.group_count) * self.spec.m_total)[None, :, None]
        return (self.indices + base).reshape(self.n_pre, -1)

    def mask(self) -> np.ndarray:
        m = np.zeros((self.n_pre, self.n_post), dtype=bool)
        np.put_along_axis(m, self.post_index(), True, axis=1)
        return m

    def dense(self) -> np.ndarray:
        """Dense raw weight matrix of shape (n_pre, n_post) with zeros off-mask."""
        d = np.zeros((self.n_pre, self.n_post), dtype=np.int64)
        np.put_along_axis(d, self.post_index(), self.values.reshape(self.n_pre, -1), axis=1)
        return d

    def stats(self) -> "MaskStats":
        return MaskStats.of(self)

    def check(self) -> None:
        """Assert the N-per-group, sorted, in-range invariant."""
        idx = self.indices
        n = self.spec.n_keep
        assert idx.shape == (self.n_pre, self.spec.group_count, n), idx.shape
        assert idx.min(initial=0) >= 0 and idx.max(initial=0) < self.spec.m_total
        if n > 1:
            assert (np.diff(idx, axis=-1) > 0).all(), "indices must be strictly ascending"

    def equals(self, other: "SparseWeightBank") -> bool:
        return (
            self.spec == other.spec
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    def export_text(self) -> str:
        """One line per (row, group): ``j g: off:w off:w ...`` with float weights."""
        lines = []
        w = WEIGHT_FMT.to_float(self.values)
        for j in range(self.n_pre):
            for g in range(self.spec.group_count):
                pairs = " ".join(f"{o}:{x:+.4f}" for o, x in zip(self.indices[j, g].tolist(), w[j, g].tolist()))
                lines.append(f"{j} {g}: {pairs}")
        return "\n".join(lines) + "\n"


@dataclass
class MaskStats:
    sparsity: float
    churn: float = 0.0
    group_histogram: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @classmethod
    def of(cls, bank: SparseWeightBank, churn: float = 0.0) -> "MaskStats":
        counts = np.bincount(bank.post_index().ravel(), minlength=bank.n_post)
        # per group: total incoming connections, must equal n_pre * N
        per_group = counts.reshape(bank.spec.group_count, -1).sum(axis=1)
        active = np.count_nonzero(bank.mask())
        return cls(1.0 - active / (bank.n_pre * bank.n_post), churn, per_group)


def init_random(spec: NMGroupSpec, n_pre: int, seed: int, scale: float) -> SparseWeightBank:
    """Uniform N-of-M index draw per (row, group), weights ~ U(-scale, scale) quantized."""
    rng = np.random.default_rng(seed)
    g, m, n = spec.group_count, spec.m_total, spec.n_keep
    keys = rng.random((n_pre, g, m))
    idx = np.sort(np.argsort(keys, axis=-1, kind="stable")[..., :n], axis=-1)
    vals = WEIGHT_FMT.to_raw(rng.uniform(-scale, scale, size=(n_pre, g, n)))
    return SparseWeightBank(spec, idx.astype(np.int64), vals.astype(np.int64))


def gather_row(bank: SparseWeightBank, j: int) -> list[tuple[int, int]]:
    """Fan-out of presynaptic neuron ``j`` as ``(post index, raw weight)`` pairs."""
    if not 0 <= j < bank.n_pre:
        raise IndexOutOfRange(f"row {j} outside [0, {bank.n_pre})")
    m = bank.spec.m_total
    out = []
    for g in range(bank.spec.group_count):
        out.extend((g * m + int(o), int(w)) for o, w in zip(bank.indices[j, g], bank.values[j, g]))
    return out


def integrate_rows(bank: SparseWeightBank, rows: np.ndarray, groups: Sequence[int] | None = None) -> np.ndarray:
    """Input-stationary spike integration: sum the fan-out of every row in ``rows``.

    Returns the raw weight sum per postsynaptic neuron (weight LSBs).  With
    ``groups`` given, only those groups are accumulated.
    """
    if len(rows) == 0:
        return np.zeros(bank.n_post, dtype=np.int64)
    m = bank.spec.m_total
    if groups is None:
        idx = bank.indices[rows] + bank.group_base
        vals = bank.values[rows]
    else:
        gs = list(groups)
        idx = bank.indices[rows][:, gs] + bank.group_base[gs]
        vals = bank.values[rows][:, gs]
    return np.bincount(idx.ravel(), weights=vals.ravel(), minlength=bank.n_post).astype(np.int64)


class HeapProbe:
    """Counts the working slots a bounded selection holds at its peak."""

    def __init__(self):
        self.peak_slots = 0
        self.builds = 0

    def observe(self, n: int) -> None:
        if n > self.peak_slots:
            self.peak_slots = n


def bounded_smallest(items: Iterable, k: int, key: Callable, probe: HeapProbe | None = None) -> list:
    """The ``k`` items with the smallest numeric-tuple ``key``, ascending.

    Keeps a max-heap of at most ``k`` entries (keys negated for heapq), so the
    working set never exceeds ``k`` no matter how long ``items`` is.
    """
    if probe is not None:
        probe.builds += 1
    if k <= 0:
        return []
    heap: list = []
    for item in items:
        kk = key(item)
        neg = tuple(-x for x in kk)
        if len(heap) < k:
            heapq.heappush(heap, (neg, item))
            if probe is not None:
                probe.observe(len(heap))
        elif neg > heap[0][0]:
            heapq.heapreplace(heap, (neg, item))
    heap.sort(reverse=True)
    return [item for _, item in heap]


def select_k_smallest(bank: SparseWeightBank, j: int, g: int, k: int,
                      probe: HeapProbe | None = None) -> list[tuple[int, int]]:
    """``k`` active ``(offset, raw weight)`` pairs of smallest |w|, ties to lower offset."""
    n = bank.spec.n_keep
    if not 0 <= k <= n:
        raise KTooLarge(f"k={k} outside [0, N={n}]")
    if not 0 <= j < bank.n_pre or not 0 <= g < bank.spec.group_count:
        raise IndexOutOfRange(f"cell ({j}, {g}) out of range")
    pairs = zip(bank.indices[j, g].tolist(), bank.values[j, g].tolist())
    return bounded_smallest(pairs, k, key=lambda p: (abs(p[1]), p[0]), probe=probe)


def apply_mask_update(bank: SparseWeightBank, j: int, g: int, prune: Iterable[int],
                      regrow: Iterable[tuple[int, int]]) -> SparseWeightBank:
    """Swap ``prune`` offsets for ``regrow`` ``(offset, init raw value)`` pairs in one cell.

    Validates everything before touching memory, so a failed call leaves the
    bank unchanged.
    """
    prune = [int(p) for p in prune]
    regrow = [(int(o), int(v)) for o, v in regrow]
    if len(prune) != len(regrow):
        raise CardinalityMismatch(f"|prune|={len(prune)} != |regrow|={len(regrow)}")
    if not prune:
        return bank
    active = bank.indices[j, g].tolist()
    active_set = set(active)
    prune_set = set(prune)
    if len(prune_set) != len(prune) or not prune_set <= active_set:
        raise PruneNotActive(f"prune set {sorted(prune_set - active_set)} not active in cell ({j}, {g})")
    keep = active_set - prune_set
    new_offsets = [o for o, _ in regrow]
    if len(set(new_offsets)) != len(new_offsets) or keep & set(new_offsets):
        raise RegrowCollision(f"regrow offsets collide with surviving connections in cell ({j}, {g})")
    if any(not 0 <= o < bank.spec.m_total for o in new_offsets):
        raise IndexOutOfRange("regrow offset outside [0, M)")
    cell = {o: v for o, v in zip(active, bank.values[j, g].tolist()) if o in keep}
    cell.update(regrow)
    order = sorted(cell)
    bank.indices[j, g] = order
    bank.values[j, g] = [WEIGHT_FMT.sat(cell[o]) for o in order]
    return bank
