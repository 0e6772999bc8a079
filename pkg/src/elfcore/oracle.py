"""Differential checks of the fast kernels against brute-force references.

Every suite draws random instances from one seeded generator, runs the
production path and an independent reference, and counts mismatches.  A
``fault`` names a suite whose production result gets one index flipped, so
callers can confirm the harness catches it.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .dsst import GradientBuffer, dense_oracle_rank, rank_regrowth
from .events import (
    BUFFER_DEPTH,
    EventKind,
    EventWord,
    DelayBuffer,
    SpikeVector,
    decode_stream,
    decode_words,
    encode_events,
)
from .sparse import HeapProbe, NMGroupSpec, init_random, integrate_rows, select_k_smallest

SUITES = ("rank_regrowth", "select_k_smallest", "gather_si", "codec", "delay_buffer")


@dataclass
class SuiteResult:
    name: str
    instances: int = 0
    mismatches: int = 0
    first_failure: str | None = None
    seconds: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.mismatches == 0

    def fail(self, what: str) -> None:
        self.mismatches += 1
        if self.first_failure is None:
            self.first_failure = what


@dataclass
class OracleReport:
    seed: int
    suites: list[SuiteResult]

    @property
    def ok(self) -> bool:
        return all(s.ok for s in self.suites)

    @property
    def failing(self) -> list[str]:
        return [s.name for s in self.suites if not s.ok]

    def render(self) -> str:
        lines = [f"oracle-check seed={self.seed}"]
        for s in self.suites:
            status = "PASS" if s.ok else "FAIL"
            extra = "".join(f" {k}={v}" for k, v in s.extra.items())
            lines.append(f"{status} {s.name}: instances={s.instances} mismatches={s.mismatches}"
                         f" time={s.seconds:.2f}s{extra}")
            if s.first_failure:
                lines.append(f"  first mismatch: {s.first_failure}")
        lines.append("ALL PASS" if self.ok else "MISMATCH in " + ", ".join(self.failing))
        return "\n".join(lines)


def _flip(values: list, fault: bool) -> list:
    if fault and values:
        values = list(values)
        values[0] = values[0] ^ 1
    return values


def check_rank_regrowth(rng, n: int, max_m: int, fault: bool = False) -> SuiteResult:
    res = SuiteResult("rank_regrowth")
    for i in range(n):
        m = int(rng.integers(1, max_m + 1))
        spec = NMGroupSpec(int(rng.integers(1, m + 1)), m, int(rng.integers(1, 5)))
        n_pre = int(rng.integers(1, 6))
        buf = GradientBuffer.zeros(n_pre, spec.post_size)
        # a narrow value range on half the instances forces ties
        hi = 4 if i % 2 else 1 << 20
        buf.post_grad[:] = rng.integers(-hi, hi + 1, spec.post_size)
        buf.pre_act[:] = rng.integers(0, 1 << 12, n_pre) * (rng.random(n_pre) < 0.8)
        g = int(rng.integers(spec.group_count))
        j = int(rng.integers(n_pre))
        active = rng.choice(m, int(rng.integers(0, m)), replace=False).tolist()
        k = int(rng.integers(0, m - len(active) + 1))
        got = _flip(rank_regrowth(buf, spec, g, j, active, k), fault and i == 0)
        want = dense_oracle_rank(buf, spec, g, j, active, k)
        res.instances += 1
        if got != want:
            res.fail(f"M={m} k={k} active={sorted(active)}: {got} != {want}")
    return res


def check_select_k(rng, n: int, max_m: int, fault: bool = False) -> SuiteResult:
    res = SuiteResult("select_k_smallest")
    peak_excess = 0
    for i in range(n):
        m = int(rng.integers(1, max_m + 1))
        spec = NMGroupSpec(int(rng.integers(1, m + 1)), m, 1)
        bank = init_random(spec, 1, int(rng.integers(1 << 31)), 1.0)
        if i % 2:
            bank.values[:] = rng.integers(-3, 4, bank.values.shape)
        k = int(rng.integers(0, spec.n_keep + 1))
        probe = HeapProbe()
        got = select_k_smallest(bank, 0, 0, k, probe=probe)
        got = [(o ^ (1 if fault and i == 0 and idx == 0 else 0), v) for idx, (o, v) in enumerate(got)]
        cells = sorted(zip(bank.indices[0, 0].tolist(), bank.values[0, 0].tolist()),
                       key=lambda c: (abs(c[1]), c[0]))
        res.instances += 1
        peak_excess = max(peak_excess, probe.peak_slots - k)
        if got != cells[:k]:
            res.fail(f"M={m} N={spec.n_keep} k={k}: {got} != {cells[:k]}")
        elif probe.peak_slots > k:
            res.fail(f"heap held {probe.peak_slots} > k={k} entries")
    res.extra["max_heap_excess"] = peak_excess
    return res


def check_gather_si(rng, n: int, max_m: int, fault: bool = False) -> SuiteResult:
    res = SuiteResult("gather_si")
    for i in range(n):
        m = int(rng.integers(1, max_m + 1))
        spec = NMGroupSpec(int(rng.integers(1, m + 1)), m, int(rng.integers(1, 5)))
        n_pre = int(rng.integers(1, 9))
        bank = init_random(spec, n_pre, int(rng.integers(1 << 31)), 1.0)
        spikes = rng.random(n_pre) < 0.5
        got = integrate_rows(bank, np.flatnonzero(spikes))
        # reference: explicit masked dense matrix built cell by cell
        dense = np.zeros((n_pre, spec.post_size), dtype=np.int64)
        for j in range(n_pre):
            for g in range(spec.group_count):
                for o, v in zip(bank.indices[j, g].tolist(), bank.values[j, g].tolist()):
                    dense[j, g * m + o] = v
        want = spikes.astype(np.int64) @ dense
        res.instances += 1
        if fault and i == 0:
            got = got.copy()
            got[0] ^= 1
        if not np.array_equal(got, want):
            res.fail(f"M={m} N={spec.n_keep} G={spec.group_count} spikes={np.flatnonzero(spikes).tolist()}")
    return res


def random_stream(rng, max_len: int = 64) -> list[EventWord]:
    n = int(rng.integers(0, max_len + 1))
    kinds = rng.integers(0, 4, n)
    payloads = rng.integers(0, 1 << 30, n)
    return [EventWord(EventKind(int(k)), int(p)) for k, p in zip(kinds, payloads)]


def check_codec(rng, n: int, fault: bool = False) -> SuiteResult:
    res = SuiteResult("codec")
    pending = fault
    for _ in range(n):
        events = random_stream(rng)
        data = encode_events(events)
        back = decode_stream(data)
        if pending and back:
            back[0] = EventWord(back[0].kind, back[0].payload ^ 1)
            pending = False
        res.instances += 1
        # reference packing, word by word
        ref = b"".join(((int(e.kind) << 30) | e.payload).to_bytes(4, "little") for e in events)
        kinds, payloads = decode_words(data)
        if (back != events or data != ref or encode_events(back) != data
                or kinds.tolist() != [int(e.kind) for e in events]
                or payloads.tolist() != [e.payload for e in events]):
            res.fail(f"stream of {len(events)} words does not round-trip")
    return res


def reference_delay(frames: list[np.ndarray], enabled, delays) -> list[np.ndarray]:
    """Output at t is the OR of inputs from t - delay for each enabled tap."""
    out = []
    for t in range(len(frames)):
        acc = np.zeros_like(frames[0])
        for on, d in zip(enabled, delays):
            if on and t - d >= 0:
                acc = acc | frames[t - d]
        out.append(acc)
    return out


def check_delay_buffer(rng, n: int, fault: bool = False) -> SuiteResult:
    res = SuiteResult("delay_buffer")
    patterns = list(itertools.product((False, True), repeat=BUFFER_DEPTH))
    per = max(1, -(-n // len(patterns)))
    for p_i, enabled in enumerate(patterns):
        for r in range(per):
            width = int(rng.integers(1, 40))
            frames = [rng.random(width) < 0.3 for _ in range(int(rng.integers(1, 12)))]
            buf = DelayBuffer(width, enabled=enabled)
            got = [buf.step(SpikeVector(f)).bits for f in frames]
            if fault and p_i == 0 and r == 0:
                got[0] = got[0].copy()
                got[0][0] ^= True
            want = reference_delay(frames, enabled, (0, 1, 2, 3))
            res.instances += 1
            if not all(np.array_equal(a, b) for a, b in zip(got, want)):
                res.fail(f"taps={enabled} width={width} steps={len(frames)}")
    res.extra["patterns"] = len(patterns)
    return res


def oracle_check(seed: int = 0, instances: int = 10_000, max_m: int = 64,
                 fault: str | None = None, suites=SUITES) -> OracleReport:
    """Run the selected differential suites with ``instances`` random cases each."""
    if fault is not None and fault not in SUITES:
        raise ValueError(f"unknown suite {fault!r}; known: {', '.join(SUITES)}")
    unknown = [s for s in suites if s not in SUITES]
    if unknown:
        raise ValueError(f"unknown suites {unknown}")
    runners = {
        "rank_regrowth": lambda rng, f: check_rank_regrowth(rng, instances, max_m, f),
        "select_k_smallest": lambda rng, f: check_select_k(rng, instances, max_m, f),
        "gather_si": lambda rng, f: check_gather_si(rng, instances, max_m, f),
        "codec": lambda rng, f: check_codec(rng, instances, f),
        "delay_buffer": lambda rng, f: check_delay_buffer(rng, instances, f),
    }
    out = []
    for i, name in enumerate(suites):
        rng = np.random.default_rng([seed, i])
        t0 = time.perf_counter()
        res = runners[name](rng, fault == name)
        res.seconds = time.perf_counter() - t0
        out.append(res)
    return OracleReport(seed, out)
