import random

from hypothesis import given
from hypothesis import strategies as st

from slofetch.compressed import CompressedEntry
from slofetch.hierarchy import MetadataHierarchy, VirtualTable, budget

entries = st.builds(
    CompressedEntry,
    st.integers(0, (1 << 20) - 1),
    st.tuples(*[st.integers(0, 3)] * 7, st.integers(1, 3)),
)


def test_fill_of_unknown_line_has_no_slot():
    m = MetadataHierarchy()
    m.on_l1_fill(77)
    assert m.lookup_for_trigger(77) == (None, 0)


@given(entry=entries, line=st.integers(0, 1 << 40))
def test_evict_refill_round_trip(entry, line):
    m = MetadataHierarchy()
    m.on_l1_fill(line)
    m.put(line, entry)
    m.on_l1_evict(line)
    assert line not in m.slots
    m.on_l1_fill(line)
    assert m.slots[line].pack() == entry.pack()
    assert m.table.get(line) is None


def test_evict_with_empty_slot_leaves_table():
    m = MetadataHierarchy()
    m.on_l1_fill(5)
    m.on_l1_evict(5)
    assert len(m.table) == 0


def test_seventeen_sources_in_one_set():
    t = VirtualTable(2048)
    e = CompressedEntry(1, (1,) + (0,) * 7)
    sources = [3 + k * t.sets for k in range(17)]
    victims = [t.install(s, e) for s in sources]
    assert sum(v is not None for v in victims) == 1
    assert t.get(sources[0]) is None
    assert all(t.get(s) is not None for s in sources[1:])


def test_mass_eviction_occupancy():
    rng = random.Random(3)
    m = MetadataHierarchy(table_entries=64)
    lru = {}  # set index -> list of sources, LRU first
    for _ in range(3000):
        line = rng.randrange(1 << 16)
        m.on_l1_fill(line)
        if rng.random() < 0.7:
            m.put(line, CompressedEntry(line & 0xFFFFF, (2,) + (0,) * 7))
        live = line in m.slots
        m.on_l1_evict(line)
        if live:
            s = lru.setdefault(line % m.table.sets, [])
            if line in s:
                s.remove(line)
            s.append(line)
            del s[:-16]
    assert len(m.table) == sum(len(s) for s in lru.values())
    for idx, s in lru.items():
        want = [x >> m.table.index_bits for x in s]
        assert m.table.lru_order(idx) == want


def test_lookup_delays():
    e = CompressedEntry(9, (1,) + (0,) * 7)
    m = MetadataHierarchy()
    m.on_l1_fill(40)
    m.put(40, e)
    assert m.lookup_for_trigger(40) == (e, 0)
    m.on_l1_evict(40)
    assert m.lookup_for_trigger(40) == (e, 15)
    assert m.lookup_for_trigger(41) == (None, 0)


def test_table_only_mode():
    e = CompressedEntry(9, (1,) + (0,) * 7)
    m = MetadataHierarchy(attach=False, table_delay=0)
    m.on_l1_fill(40)
    m.put(40, e)
    assert m.slots == {}
    assert m.lookup_for_trigger(40) == (e, 0)


def test_dump_record_width():
    m = MetadataHierarchy()
    m.on_l1_fill(1)
    m.put(1, CompressedEntry(2, (1,) + (0,) * 7))
    m.put(99, CompressedEntry(3, (1,) + (0,) * 7))
    assert len(m.dump()) == 2 * (8 + 11)


def test_budget_components():
    b = budget()
    assert (b.history_bytes, b.attached_bytes, b.table_bytes) == (624, 2304, 22272)
    assert budget(4096).table_bytes == 44544
    assert b.total_bytes == b.history_bytes + b.attached_bytes + b.table_bytes


def test_budget_degenerate_table():
    b = budget(0)
    assert (b.table_bytes, b.total_bytes) == (0, 2928)
