"""Window building and merge algebra."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tmsensor.anon import anonymize_ip
from tmsensor.errors import InvariantViolation, KeyMismatch, WindowSizeMismatch
from tmsensor.matrix import (
    DEFAULT_WINDOW_SIZE,
    TrafficMatrix,
    build_windows,
    merge,
)
from tmsensor.pcap import PacketRecord


def make_packet(src: bytes, dst: bytes, ts: int = 0) -> PacketRecord:
    return PacketRecord(ts, 4, src, dst, 60, 60)


def stream(pairs, ts_start=0):
    return [
        make_packet(bytes(src), bytes(dst), ts_start + i)
        for i, (src, dst) in enumerate(pairs)
    ]


def empty_like(m: TrafficMatrix) -> TrafficMatrix:
    return TrafficMatrix(m.window_size, 0, 0, 0, m.key_id, {})


def test_empty_stream_builds_nothing(fixed_key):
    assert list(build_windows([], fixed_key)) == []


def test_single_cell_aggregation(fixed_key):
    pairs = [((10, 0, 0, 1), (10, 0, 0, 2))] * 5
    (m,) = build_windows(stream(pairs), fixed_key, DEFAULT_WINDOW_SIZE)
    sid = anonymize_ip(fixed_key, 4, bytes((10, 0, 0, 1)))
    did = anonymize_ip(fixed_key, 4, bytes((10, 0, 0, 2)))
    assert m.entries == {(sid, did): 5}
    assert m.packet_count == 5
    assert m.window_size == DEFAULT_WINDOW_SIZE
    assert m.key_id == fixed_key.key_id


def test_window_boundary_at_exactly_one_extra_packet(fixed_key):
    n = 4096
    packets = (
        make_packet(b"\x0a\x00\x00\x01", b"\x0a\x00\x00\x02", i)
        for i in range(n + 1)
    )
    counts = [m.packet_count for m in build_windows(packets, fixed_key, n)]
    assert counts == [n, 1]


def test_default_window_size_boundary(fixed_key):
    """131,073 packets at the default window → counts [131072, 1]."""
    n = DEFAULT_WINDOW_SIZE
    packets = (
        make_packet(b"\x0a\x00\x00\x01", b"\x0a\x00\x00\x02", i)
        for i in range(n + 1)
    )
    counts = [m.packet_count for m in build_windows(packets, fixed_key)]
    assert counts == [n, 1]


def test_matches_brute_force_pair_counting(fixed_key):
    rng = random.Random(5)
    hosts = [bytes([10, 0, 0, h]) for h in range(1, 51)]
    pairs = []
    for _ in range(10_000):
        src, dst = rng.sample(hosts, 2)
        pairs.append((src, dst))

    (m,) = build_windows(stream(pairs), fixed_key, 1 << 20)

    expected: dict = {}
    for src, dst in pairs:
        cell = (anonymize_ip(fixed_key, 4, src), anonymize_ip(fixed_key, 4, dst))
        expected[cell] = expected.get(cell, 0) + 1
    assert m.entries == expected
    assert m.packet_count == 10_000


def test_time_range_is_min_max_of_timestamps(fixed_key):
    packets = [
        make_packet(b"\x0a\x00\x00\x01", b"\x0a\x00\x00\x02", ts)
        for ts in (500, 100, 900, 300)  # reordering tolerated
    ]
    (m,) = build_windows(packets, fixed_key, 1 << 10)
    assert (m.start_time_us, m.end_time_us) == (100, 900)


def test_output_invariant_to_input_chunking(fixed_key):
    rng = random.Random(11)
    pairs = [
        ((10, 0, 0, rng.randrange(1, 20)), (10, 0, 1, rng.randrange(1, 20)))
        for _ in range(997)
    ]
    packets = stream(pairs)

    def chunked(seq, sizes):
        it = iter(seq)
        while True:
            block = [x for _, x in zip(range(next(sizes)), it)]
            if not block:
                return
            yield from block

    sizes = iter([1, 5, 100, 7, 884, 1000])
    one_shot = list(build_windows(packets, fixed_key, 256))
    streamed = list(build_windows(chunked(packets, sizes), fixed_key, 256))
    assert one_shot == streamed


def test_trailing_partial_window_emitted(fixed_key):
    pairs = [((10, 0, 0, 1), (10, 0, 0, 2))] * 700
    ms = list(build_windows(stream(pairs), fixed_key, 256))
    assert [m.packet_count for m in ms] == [256, 256, 188]
    for m in ms:
        m.validate()


def test_window_size_below_one_rejected(fixed_key):
    with pytest.raises(ValueError):
        list(build_windows([], fixed_key, 0))


def test_merge_with_empty_is_identity(fixed_key):
    pairs = [((10, 0, 0, 1), (10, 0, 0, 2))] * 3
    (m,) = build_windows(stream(pairs, ts_start=50), fixed_key, 1 << 10)
    for combined in (merge(m, empty_like(m)), merge(empty_like(m), m)):
        assert combined.entries == m.entries
        assert combined.packet_count == m.packet_count
        assert (combined.start_time_us, combined.end_time_us) == (50, 52)


def test_merge_self_doubles_everything(fixed_key):
    pairs = [((10, 0, 0, 1), (10, 0, 0, 2))] * 3 + [((10, 0, 0, 2), (10, 0, 0, 1))]
    (m,) = build_windows(stream(pairs), fixed_key, 1 << 10)
    doubled = merge(m, m)
    assert doubled.packet_count == 2 * m.packet_count
    assert doubled.entries == {cell: 2 * n for cell, n in m.entries.items()}
    assert doubled.window_size == m.window_size


def test_merge_rejects_different_keys():
    a = TrafficMatrix(1024, 0, 0, 0, b"\x01" * 8, {})
    b = TrafficMatrix(1024, 0, 0, 0, b"\x02" * 8, {})
    with pytest.raises(KeyMismatch):
        merge(a, b)


def test_merge_rejects_different_window_sizes():
    a = TrafficMatrix(1024, 0, 0, 0, b"\x01" * 8, {})
    b = TrafficMatrix(2048, 0, 0, 0, b"\x01" * 8, {})
    with pytest.raises(WindowSizeMismatch):
        merge(a, b)


entries_strategy = st.dictionaries(
    st.tuples(st.integers(0, (1 << 64) - 1), st.integers(0, (1 << 64) - 1)),
    st.integers(1, 1 << 20),
    max_size=30,
)


def matrix_from(entries, start=1000):
    total = sum(entries.values())
    if total == 0:
        return TrafficMatrix(512, 0, 0, 0, b"\x09" * 8, {})
    return TrafficMatrix(512, total, start, start + 500, b"\x09" * 8, dict(entries))


@settings(max_examples=100, deadline=None)
@given(entries_strategy, entries_strategy, st.integers(0, 1 << 30))
def test_merge_commutes(e1, e2, start):
    a, b = matrix_from(e1), matrix_from(e2, start)
    assert merge(a, b) == merge(b, a)


@settings(max_examples=100, deadline=None)
@given(entries_strategy, entries_strategy, entries_strategy)
def test_merge_associates(e1, e2, e3):
    a, b, c = matrix_from(e1), matrix_from(e2, 77), matrix_from(e3, 123456)
    assert merge(merge(a, b), c) == merge(a, merge(b, c))


@settings(max_examples=100, deadline=None)
@given(entries_strategy, entries_strategy)
def test_merge_conserves_mass_and_validates(e1, e2):
    a, b = matrix_from(e1), matrix_from(e2)
    combined = merge(a, b)
    combined.validate()
    assert combined.packet_count == a.packet_count + b.packet_count
    assert sum(combined.entries.values()) == combined.packet_count


@pytest.mark.parametrize(
    "bad",
    [
        TrafficMatrix(0, 0, 0, 0, b"\x01" * 8, {}),               # window < 1
        TrafficMatrix(8, 1, 0, 0, b"\x01" * 4, {(1, 2): 1}),      # short key_id
        TrafficMatrix(8, 2, 0, 0, b"\x01" * 8, {(1, 2): 1}),      # count mismatch
        TrafficMatrix(8, 1, 0, 0, b"\x01" * 8, {(1, 2): 0}),      # zero entry
        TrafficMatrix(8, 1, 0, 0, b"\x01" * 8, {(1 << 64, 2): 1}),  # row overflow
        TrafficMatrix(8, 1, 5, 4, b"\x01" * 8, {(1, 2): 1}),      # start > end
        TrafficMatrix(8, 0, 1, 1, b"\x01" * 8, {}),               # empty with times
    ],
)
def test_validate_rejects_broken_matrices(bad):
    with pytest.raises(InvariantViolation):
        bad.validate()


def test_builder_output_validates_and_is_sorted_on_demand(fixed_key):
    rng = random.Random(3)
    pairs = [
        ((10, 0, 0, rng.randrange(1, 30)), (10, 0, 2, rng.randrange(1, 30)))
        for _ in range(500)
    ]
    for m in build_windows(stream(pairs), fixed_key, 128):
        m.validate()
        cells = [cell for cell, _ in m.sorted_entries()]
        assert cells == sorted(cells)
