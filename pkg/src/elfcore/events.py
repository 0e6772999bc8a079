"""Event-stream codec and the 4-slot spatiotemporal delay buffer.

Wire format: each event is one little-endian 32-bit word.  Bits 31..30 carry
the kind tag, bits 29..0 the payload.  A timestep is the run of spike words
closed by a ``TIMESTEP`` word; a sample ends with an optional ``LABEL`` word
followed by a ``SAMPLE`` word.  ``.elf-events`` files are raw word dumps with
no header.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .errors import DataError, PayloadOverflow, TruncatedStream, WidthMismatch

PAYLOAD_BITS = 30
PAYLOAD_MASK = (1 << PAYLOAD_BITS) - 1
DEFAULT_WIDTH = 512
BUFFER_DEPTH = 4
FILE_SUFFIX = ".elf-events"


class EventKind(enum.IntEnum):
    SPIKE = 0
    TIMESTEP = 1
    SAMPLE = 2
    LABEL = 3


class EventWord(NamedTuple):
    kind: EventKind
    payload: int = 0

    @classmethod
    def spike(cls, address: int) -> "EventWord":
        return cls(EventKind.SPIKE, address)

    @classmethod
    def label(cls, class_id: int) -> "EventWord":
        return cls(EventKind.LABEL, class_id)


TIMESTEP = EventWord(EventKind.TIMESTEP, 0)
SAMPLE_END = EventWord(EventKind.SAMPLE, 0)


def decode_words(data: bytes) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized decode: returns ``(kinds, payloads)`` as uint32 arrays."""
    if len(data) % 4:
        raise TruncatedStream(f"stream length {len(data)} is not a multiple of 4")
    words = np.frombuffer(data, dtype="<u4")
    return words >> PAYLOAD_BITS, words & PAYLOAD_MASK


def decode_stream(data: bytes) -> list[EventWord]:
    kinds, payloads = decode_words(data)
    return [EventWord(EventKind(k), p) for k, p in zip(kinds.tolist(), payloads.tolist())]


def encode_events(events: Iterable[EventWord]) -> bytes:
    events = list(events)
    kinds = np.fromiter((int(e[0]) for e in events), dtype=np.int64, count=len(events))
    payloads = np.fromiter((int(e[1]) for e in events), dtype=np.int64, count=len(events))
    bad = (payloads < 0) | (payloads > PAYLOAD_MASK)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise PayloadOverflow(f"event {i}: payload {int(payloads[i])} does not fit in 30 bits")
    if ((kinds < 0) | (kinds > 3)).any():
        raise ValueError("kind tag must be in 0..3")
    words = (kinds.astype(np.uint32) << PAYLOAD_BITS) | payloads.astype(np.uint32)
    return words.astype("<u4").tobytes()


def read_events(path: str | os.PathLike) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def write_events(path: str | os.PathLike, events: Iterable[EventWord]) -> int:
    data = encode_events(events)
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


@dataclass
class SpikeVector:
    bits: np.ndarray
    timestep: int = 0

    @classmethod
    def zeros(cls, width: int = DEFAULT_WIDTH, timestep: int = 0) -> "SpikeVector":
        return cls(np.zeros(width, dtype=bool), timestep)

    @classmethod
    def from_addresses(cls, addresses, width: int = DEFAULT_WIDTH, timestep: int = 0) -> "SpikeVector":
        bits = np.zeros(width, dtype=bool)
        addresses = np.asarray(addresses, dtype=np.int64)
        if addresses.size and (addresses.min() < 0 or addresses.max() >= width):
            raise DataError(f"spike address outside input width {width}")
        bits[addresses] = True
        return cls(bits, timestep)

    @property
    def width(self) -> int:
        return self.bits.shape[0]

    def popcount(self) -> int:
        return int(self.bits.sum())


@dataclass
class DelayBuffer:
    """Ring of four spike vectors; output is the OR of enabled taps.

    Tap ``i`` reads the vector written ``delays[i]`` steps ago.
    """

    width: int = DEFAULT_WIDTH
    enabled: tuple[bool, ...] = (True, False, False, False)
    delays: tuple[int, ...] = (0, 1, 2, 3)
    slots: np.ndarray = field(init=False, repr=False)
    write_index: int = field(init=False, default=0)

    def __post_init__(self):
        if len(self.enabled) != BUFFER_DEPTH or len(self.delays) != BUFFER_DEPTH:
            raise ValueError("delay buffer has exactly 4 taps")
        if any(not 0 <= d < BUFFER_DEPTH for d in self.delays):
            raise ValueError("tap delays must be in 0..3")
        self.enabled = tuple(bool(e) for e in self.enabled)
        self.delays = tuple(int(d) for d in self.delays)
        self.slots = np.zeros((BUFFER_DEPTH, self.width), dtype=bool)

    def reset(self) -> None:
        self.slots[:] = False
        self.write_index = 0

    def step(self, v: SpikeVector) -> SpikeVector:
        if v.width != self.width:
            raise WidthMismatch(f"vector width {v.width} != buffer width {self.width}")
        w = self.write_index
        self.slots[w] = v.bits
        out = np.zeros(self.width, dtype=bool)
        for on, d in zip(self.enabled, self.delays):
            if on:
                out |= self.slots[(w - d) % BUFFER_DEPTH]
        self.write_index = (w + 1) % BUFFER_DEPTH
        return SpikeVector(out, v.timestep)

    @property
    def is_identity(self) -> bool:
        return self.enabled == (True, False, False, False) and self.delays[0] == 0


def buffer_step(buf: DelayBuffer, v: SpikeVector) -> tuple[DelayBuffer, SpikeVector]:
    out = buf.step(v)
    return buf, out


@dataclass
class Sample:
    """One decoded sample: per-timestep sorted unique spike addresses."""

    steps: list[np.ndarray]
    label: int | None = None

    @property
    def n_steps(self) -> int:
        return len(self.steps)


def iter_samples(data: bytes, width: int | None = None) -> Iterator[Sample]:
    """Group a decoded stream into samples.

    Duplicate spike words within one timestep collapse to one address.  Spike
    words after the last ``TIMESTEP`` of a sample are folded into a final step.
    """
    kinds, payloads = decode_words(data)
    steps: list[np.ndarray] = []
    label: int | None = None
    start = 0
    boundaries = np.flatnonzero(kinds != EventKind.SPIKE)
    for b in boundaries.tolist():
        kind = int(kinds[b])
        if kind == EventKind.TIMESTEP:
            steps.append(_collapse(payloads[start:b], width))
        elif kind == EventKind.LABEL:
            if b > start:
                steps.append(_collapse(payloads[start:b], width))
            label = int(payloads[b])
        else:
            if b > start:
                steps.append(_collapse(payloads[start:b], width))
            yield Sample(steps, label)
            steps, label = [], None
        start = b + 1
    if start < len(kinds) or steps:
        if start < len(kinds):
            steps.append(_collapse(payloads[start:], width))
        yield Sample(steps, label)


def _collapse(addresses: np.ndarray, width: int | None) -> np.ndarray:
    out = np.unique(addresses.astype(np.int64))
    if width is not None and out.size and out[-1] >= width:
        raise DataError(f"spike address {int(out[-1])} >= input width {width}")
    return out


def load_samples(path: str | os.PathLike, width: int | None = None) -> list[Sample]:
    return list(iter_samples(read_events(path), width))


def sample_events(steps: Sequence[Iterable[int]], label: int | None = None) -> list[EventWord]:
    """Build the word sequence for one sample."""
    out: list[EventWord] = []
    for addrs in steps:
        out.extend(EventWord(EventKind.SPIKE, int(a)) for a in addrs)
        out.append(TIMESTEP)
    if label is not None:
        out.append(EventWord(EventKind.LABEL, int(label)))
    out.append(SAMPLE_END)
    return out


def stream_stats(data: bytes) -> dict:
    """Length and per-kind event counts for diagnostics."""
    kinds, _ = decode_words(data)
    counts = np.bincount(kinds.astype(np.int64), minlength=4)
    return {
        "bytes": len(data),
        "words": int(kinds.size),
        "spikes": int(counts[EventKind.SPIKE]),
        "timesteps": int(counts[EventKind.TIMESTEP]),
        "samples": int(counts[EventKind.SAMPLE]),
        "labels": int(counts[EventKind.LABEL]),
    }
