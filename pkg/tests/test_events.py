import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from elfcore.errors import DataError, PayloadOverflow, TruncatedStream, WidthMismatch
from elfcore.events import (
    SAMPLE_END,
    TIMESTEP,
    DelayBuffer,
    EventKind,
    EventWord,
    SpikeVector,
    buffer_step,
    decode_stream,
    encode_events,
    iter_samples,
    sample_events,
    stream_stats,
)


def test_decode_spike_word():
    assert decode_stream(bytes([0x05, 0, 0, 0])) == [EventWord(EventKind.SPIKE, 5)]


def test_decode_timestep_word():
    assert decode_stream(bytes([0, 0, 0, 0x40])) == [TIMESTEP]


def test_encode_zero_spike_and_sample_end():
    assert encode_events([EventWord.spike(0)]) == bytes(4)
    assert encode_events([SAMPLE_END]) == bytes([0, 0, 0, 0x80])


def test_label_tag_occupies_top_bits():
    assert encode_events([EventWord.label(3)]) == bytes([3, 0, 0, 0xC0])


def test_truncated_stream():
    with pytest.raises(TruncatedStream):
        decode_stream(bytes(5))


def test_payload_overflow():
    with pytest.raises(PayloadOverflow):
        encode_events([EventWord.spike(1 << 30)])
    encode_events([EventWord.spike((1 << 30) - 1)])


def test_round_trip_random_buffers(rng):
    # every 32-bit word is well formed, so any 4-byte-multiple buffer round-trips
    for _ in range(1000):
        n = int(rng.integers(0, 64)) * 4
        b = rng.integers(0, 256, n, dtype=np.uint8).tobytes()
        assert encode_events(decode_stream(b)) == b


def test_round_trip_ten_thousand_event_lists(rng):
    for _ in range(10_000):
        n = int(rng.integers(0, 12))
        kinds = rng.integers(0, 4, n)
        payloads = rng.integers(0, 1 << 30, n)
        events = [EventWord(EventKind(int(k)), int(p)) for k, p in zip(kinds, payloads)]
        assert decode_stream(encode_events(events)) == events


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, (1 << 30) - 1)), max_size=50))
def test_round_trip_property(pairs):
    events = [EventWord(EventKind(k), p) for k, p in pairs]
    data = encode_events(events)
    assert len(data) == 4 * len(events)
    assert decode_stream(data) == events


def _reference_buffer(inputs, enabled, delays):
    """Keep the whole history and OR the enabled taps."""
    out = []
    for t in range(len(inputs)):
        acc = np.zeros_like(inputs[0])
        for on, d in zip(enabled, delays):
            if on and t - d >= 0:
                acc = acc | inputs[t - d]
        out.append(acc)
    return out


def test_identity_tap(rng):
    buf = DelayBuffer(16)
    for t in range(10):
        v = SpikeVector(rng.random(16) < 0.3, t)
        buf, out = buffer_step(buf, v)
        assert np.array_equal(out.bits, v.bits)


def test_single_tap_delay_three():
    buf = DelayBuffer(4, enabled=(False, False, False, True))
    ins = [np.eye(4, dtype=bool)[i] for i in range(4)]
    outs = [buf.step(SpikeVector(v)).bits for v in ins]
    for o in outs[:3]:
        assert not o.any()
    assert np.array_equal(outs[3], ins[0])


def test_two_taps_or_current_and_previous():
    buf = DelayBuffer(2, enabled=(True, True, False, False))
    ins = [np.array([t % 2 == 0, t % 2 == 1]) for t in range(8)]
    outs = [buf.step(SpikeVector(v)).bits for v in ins]
    assert np.array_equal(outs[0], ins[0])
    for t in range(1, 8):
        assert np.array_equal(outs[t], ins[t] | ins[t - 1])


@pytest.mark.parametrize("pattern", list(itertools.product([False, True], repeat=4)))
def test_all_tap_patterns_match_reference(pattern, rng):
    inputs = [rng.random(32) < 0.2 for _ in range(20)]
    buf = DelayBuffer(32, enabled=pattern)
    got = [buf.step(SpikeVector(v)).bits for v in inputs]
    want = _reference_buffer(inputs, pattern, (0, 1, 2, 3))
    assert all(np.array_equal(g, w) for g, w in zip(got, want))


def test_or_of_taps_equals_or_of_single_tap_runs(rng):
    inputs = [rng.random(24) < 0.25 for _ in range(15)]
    both = DelayBuffer(24, enabled=(False, True, False, True))
    singles = [DelayBuffer(24, enabled=(False, True, False, False)),
               DelayBuffer(24, enabled=(False, False, False, True))]
    for v in inputs:
        combined = both.step(SpikeVector(v)).bits
        parts = [b.step(SpikeVector(v)).bits for b in singles]
        assert np.array_equal(combined, parts[0] | parts[1])


def test_ring_index_wraps():
    buf = DelayBuffer(3)
    for t in range(9):
        assert buf.write_index == t % 4
        buf.step(SpikeVector.zeros(3))


def test_width_mismatch():
    with pytest.raises(WidthMismatch):
        DelayBuffer(8).step(SpikeVector.zeros(9))


def test_duplicates_collapse_to_one_bit():
    events = [EventWord.spike(7)] * 5 + [EventWord.spike(2), TIMESTEP, SAMPLE_END]
    (sample,) = list(iter_samples(encode_events(events), width=16))
    assert sample.steps[0].tolist() == [2, 7]
    v = SpikeVector.from_addresses(sample.steps[0], 16)
    assert v.popcount() == 2


def test_samples_and_labels_are_grouped():
    data = encode_events(sample_events([[1, 2], [], [3]], label=4) + sample_events([[0]], label=1))
    samples = list(iter_samples(data, width=8))
    assert [s.label for s in samples] == [4, 1]
    assert [len(s.steps) for s in samples] == [3, 1]
    assert samples[0].steps[1].size == 0


def test_address_outside_width_is_data_error():
    data = encode_events(sample_events([[9]]))
    with pytest.raises(DataError):
        list(iter_samples(data, width=8))


def test_stream_stats():
    data = encode_events(sample_events([[1, 1], [2]], label=0))
    assert stream_stats(data) == {"bytes": 28, "words": 7, "spikes": 3, "timesteps": 2, "samples": 1, "labels": 1}
