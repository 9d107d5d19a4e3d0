import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from slofetch import compressed as cmp
from slofetch.compressed import CompressedEntry, NotRepresentable
from slofetch.trace import SyntheticWorkloadSpec, cluster_stats, generate_synthetic, miss_lines

L = 0x5_0000_0040

confs = st.tuples(*[st.integers(0, 3)] * 8)


def test_decode_identity():
    src = 0xABCDE12345
    assert cmp.decode(CompressedEntry(src & cmp.BASE_MASK, (1,) + (0,) * 7), src) == src


def test_decode_bit_splice():
    assert cmp.decode(CompressedEntry(0x12346, (1,) + (0,) * 7), 0xABCDE12345) == 0xABCDE12346


def test_encode_decode_round_trip():
    rng = random.Random(5)
    for _ in range(100_000):
        src = rng.getrandbits(64)
        d = (src & ~cmp.BASE_MASK) | rng.getrandbits(20)
        assert cmp.decode(cmp.encode(d, src), src) == d


def test_representable():
    assert cmp.representable(L, L)
    assert not cmp.representable(L, L ^ (1 << 21))


def test_representable_fraction_matches_stats():
    trace = generate_synthetic(SyntheticWorkloadSpec(seed=4, record_count=30_000, layout_scatter=0.3))
    misses = miss_lines(trace)
    frac = sum(cmp.representable(a, b) for a, b in zip(misses, misses[1:])) / (len(misses) - 1)
    assert frac == cluster_stats(trace).delta20_fraction


def test_update_empty():
    e = cmp.update(None, L, L + 3)
    assert cmp.decode(e, L) == L + 3 and e.conf == (1,) + (0,) * 7


def test_update_keeps_current_window():
    e = cmp.encode(L, L, offsets=(0, 1))
    new = cmp.update(e, L, L + 9)
    assert cmp.decode(new, L) == L
    assert not new.covers(L, L + 9)
    assert new.conf == e.conf


def test_update_slides_to_cover_both():
    e = cmp.encode(L + 1, L, offsets=(0,))
    new = cmp.update(e, L, L + 8)
    assert cmp.decode(new, L) == L + 1
    assert new.conf[0] == 1 and new.conf[7] == 1


def test_update_increments_existing_mark():
    e = cmp.update(cmp.update(None, L, L + 2), L, L + 2)
    assert e.conf[0] == 2


def test_update_not_representable():
    with pytest.raises(NotRepresentable):
        cmp.update(None, L, L + (1 << 21))


def test_window_stays_in_region():
    top = (L | cmp.BASE_MASK)
    e = cmp.update(None, L, top)
    b = cmp.decode(e, L)
    assert b + 7 <= top and e.covers(L, top)


@given(conf=confs, base=st.integers(0, cmp.BASE_MASK), moves=st.lists(st.integers(-10, 17), max_size=6))
def test_no_confidence_inflation(conf, base, moves):
    e = CompressedEntry(base, conf)
    src = (L & ~cmp.BASE_MASK) | base
    for m in moves:
        d = min(max(src + m, src & ~cmp.BASE_MASK), src | cmp.BASE_MASK)
        new = cmp.update(e, src, d)
        assert sum(new.conf) <= sum(e.conf) + 1
        e = new


@given(conf=confs, base=st.integers(0, cmp.BASE_MASK), d=st.integers(-12, 20))
def test_update_is_pure(conf, base, d):
    e = CompressedEntry(base, conf)
    src = (L & ~cmp.BASE_MASK) | base
    dst = min(max(src + d, src & ~cmp.BASE_MASK), src | cmp.BASE_MASK)
    assert cmp.update(e, src, dst) == cmp.update(e, src, dst)


@given(conf=confs, base=st.integers(0, cmp.BASE_MASK))
def test_pack_round_trip(conf, base):
    e = CompressedEntry(base, conf)
    word = e.pack()
    assert word < 1 << 36
    assert CompressedEntry.unpack(word) == e


def test_pack_layout():
    e = CompressedEntry(0xABCDE, (1, 2, 3, 0, 0, 0, 0, 3))
    assert e.pack() == 0xABCDE | (1 << 20) | (2 << 22) | (3 << 24) | (3 << 34)


def test_512_entries_are_2304_bytes():
    rng = random.Random(1)
    entries = [CompressedEntry(rng.getrandbits(20), tuple(rng.randrange(4) for _ in range(8))) for _ in range(512)]
    blob = cmp.pack_entries(entries)
    assert len(blob) == 2304
    assert cmp.unpack_entries(blob, 512) == entries


def test_targets_examples():
    empty = CompressedEntry(0x10, (0,) * 8)
    assert cmp.targets(empty, L, threshold=1) == []
    assert cmp.targets(empty, L, threshold=0) == []
    e = CompressedEntry(L & cmp.BASE_MASK, (3, 0, 0, 0, 0, 0, 0, 2))
    assert cmp.targets(e, L, threshold=2, window_limit=8) == [L, L + 7]
    assert cmp.targets(e, L, threshold=1, window_limit=4) == [L]
    one = CompressedEntry(L & cmp.BASE_MASK, (1,) + (0,) * 7)
    assert cmp.targets(one, L, 1, 12) == [L, L + 8, L + 9, L + 10, L + 11]


def test_targets_bad_limit():
    with pytest.raises(ValueError):
        cmp.targets(CompressedEntry(0), L, 1, 6)


def test_adjusted_drops_dead_entry():
    e = cmp.encode(L, L)
    assert e.adjusted(L, L, -1) is None
    assert e.adjusted(L, L, +5).conf[0] == 3
    assert e.adjusted(L, L + 5, -1) is e
