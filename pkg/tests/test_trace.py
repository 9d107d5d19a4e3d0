import random
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slofetch.trace import (
    BadMagic,
    EmptyTrace,
    InvalidSpec,
    Kind,
    SyntheticWorkloadSpec,
    TruncatedRecord,
    UnknownKind,
    UnmatchedRpcEnd,
    best_window_cover,
    cluster_stats,
    decode_records,
    encode_records,
    fetch,
    generate_synthetic,
    load_trace,
    miss_lines,
    rpc_begin,
    rpc_end,
    save_trace,
)

HEADER = b"SLOF" + struct.pack("<I", 1)


def test_empty_body_is_empty_stream():
    assert list(decode_records(HEADER)) == []


def test_single_fetch_line():
    data = HEADER + struct.pack("<BBQ", 0, 0, 0x40)
    (r,) = decode_records(data)
    assert r.kind == Kind.FETCH and r.line == 1


def test_record_layout_is_ten_bytes():
    data = encode_records([fetch(0x1234, 7), rpc_begin(9, 2), rpc_end(9, 2)])
    assert len(data) == 8 + 30
    assert data[8:18] == struct.pack("<BBQ", 0, 7, 0x1234)
    assert data[18:28] == struct.pack("<BBQ", 1, 2, 9)


def test_file_round_trip(tmp_path, small_spec):
    recs = generate_synthetic(small_spec)
    path = tmp_path / "t.slof"
    assert save_trace(path, recs) == len(recs)
    assert list(load_trace(path)) == recs


def test_bad_magic_offset_zero():
    with pytest.raises(BadMagic) as e:
        list(decode_records(b"NOPE" + struct.pack("<I", 1)))
    assert e.value.offset == 0


def test_bad_version():
    with pytest.raises(BadMagic) as e:
        list(decode_records(b"SLOF" + struct.pack("<I", 2)))
    assert e.value.offset == 4


def test_truncated_record_reports_offset():
    data = HEADER + struct.pack("<BBQ", 0, 0, 64) + b"\x00\x00\x00"
    it = decode_records(data)
    assert next(it).line == 1
    with pytest.raises(TruncatedRecord) as e:
        next(it)
    assert e.value.offset == 18


def test_unknown_kind_offset():
    data = HEADER + struct.pack("<BBQ", 0, 0, 64) + struct.pack("<BBQ", 9, 0, 0)
    with pytest.raises(UnknownKind) as e:
        list(decode_records(data))
    assert e.value.offset == 18


def test_unmatched_rpc_end():
    data = encode_records([rpc_begin(1), rpc_end(1), rpc_end(1)])
    with pytest.raises(UnmatchedRpcEnd) as e:
        list(decode_records(data))
    assert e.value.offset == 8 + 20


def test_sequential_when_no_control_flow():
    spec = SyntheticWorkloadSpec(
        function_count=1, call_probability=0.0, loop_probability=0.0,
        phase_churn_probability=0.0, record_count=3000,
    )
    lines = []
    for r in generate_synthetic(spec):
        if r.kind == Kind.FETCH and (not lines or lines[-1] != r.line):
            lines.append(r.line)
    # one function executed over and over: each pass is +1 steps then a wrap
    steps = [b - a for a, b in zip(lines, lines[1:])]
    assert steps and all(s == 1 or b == lines[0] for s, b in zip(steps, lines[1:]))


def test_exact_record_count(small_spec):
    assert len(generate_synthetic(small_spec)) == small_spec.record_count


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32), fanout=st.integers(1, 4), scatter=st.floats(0, 1))
def test_generation_is_deterministic(seed, fanout, scatter):
    spec = SyntheticWorkloadSpec(seed=seed, record_count=600, indirect_fanout=fanout, layout_scatter=scatter)
    assert encode_records(generate_synthetic(spec)) == encode_records(generate_synthetic(spec))


def test_rpcs_are_balanced(small_spec):
    depth = {}
    for r in generate_synthetic(small_spec):
        if r.kind == Kind.RPC_BEGIN:
            depth[r.rpc_id] = depth.get(r.rpc_id, 0) + 1
        elif r.kind == Kind.RPC_END:
            assert depth.get(r.rpc_id, 0) > 0
            depth[r.rpc_id] -= 1


@pytest.mark.parametrize(
    "change",
    [
        {"function_count": 0},
        {"record_count": -1},
        {"loop_probability": 1.5},
        {"call_depth_max": -1},
        {"seed": -3},
    ],
)
def test_invalid_spec(change):
    with pytest.raises(InvalidSpec):
        generate_synthetic(SyntheticWorkloadSpec(**change))


def test_default_spec_is_clustered():
    st_ = cluster_stats(generate_synthetic(SyntheticWorkloadSpec()))
    assert st_.window8_fraction >= 0.7


def test_sequential_window_fraction_is_one():
    trace = [fetch(i * 64) for i in range(5000)]
    assert cluster_stats(trace).window8_fraction == 1.0


def test_far_alternation_not_delta20():
    far = 1 << 21
    trace = [fetch((far if i % 2 else 0) * 64) for i in range(2000)]
    assert cluster_stats(trace).delta20_fraction == 0.0


def test_too_few_misses():
    with pytest.raises(EmptyTrace):
        cluster_stats([fetch(0), fetch(0)])


def _brute_stats(trace):
    # cold fully listed LRU, 64 sets x 8 ways
    sets = [[] for _ in range(64)]
    misses = []
    for r in trace:
        x = r.address >> 6
        s = sets[x % 64]
        if x in s:
            s.remove(x)
            s.append(x)
            continue
        misses.append(x)
        if len(s) == 8:
            s.pop(0)
        s.append(x)
    pairs = list(zip(misses, misses[1:]))
    near = sum(1 for a, b in pairs if a >> 20 == b >> 20)
    by_src = {}
    for a, b in pairs:
        by_src.setdefault(a, set()).add(b)
    total = sum(len(d) for d in by_src.values())
    covered = 0
    for d in by_src.values():
        covered += max(sum(1 for y in d if b <= y <= b + 7) for b in d)
    return near / len(pairs), covered / total


def test_cluster_stats_matches_brute_force():
    rng = random.Random(7)
    trace = []
    for _ in range(6000):
        base = rng.choice([0, 1 << 20, 5 << 20, 0x3000])
        trace.append(fetch((base + rng.randrange(700)) * 64))
    st_ = cluster_stats(trace)
    d20, w8 = _brute_stats(trace)
    assert st_.delta20_fraction == pytest.approx(d20, abs=1e-12)
    assert st_.window8_fraction == pytest.approx(w8, abs=1e-12)


def test_histogram_monotone_in_window(small_spec):
    h = cluster_stats(generate_synthetic(small_spec), (4, 8, 12, 16, 32)).per_window_histogram
    vals = [h[k] for k in sorted(h)]
    assert vals == sorted(vals)


@given(st.lists(st.integers(0, 200), min_size=1, max_size=40), st.integers(1, 20))
def test_best_window_cover_brute(lines, size):
    want = max(sum(1 for y in set(lines) if b <= y < b + size) for b in set(lines))
    assert best_window_cover(lines, size) == want


def test_miss_lines_counts_cold_misses():
    assert miss_lines([fetch(0), fetch(64), fetch(0)]) == [0, 1]
