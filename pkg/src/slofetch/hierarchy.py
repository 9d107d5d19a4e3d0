"""Hierarchical metadata placement for compressed entries.

Each resident L1I line carries one attached :class:`CompressedEntry`. When the
line leaves L1 its entry moves to a 16-way virtualized table; when the line is
filled again the entry moves back. Lookups that have to go to the table pay
the L2 latency before their prefetches can issue.
"""

from __future__ import annotations

import json
import struct
from collections import OrderedDict
from dataclasses import asdict, dataclass
from typing import Dict, Iterator, List, Optional, Set, Tuple

from .compressed import ENTRY_BITS, CompressedEntry
from .eip import HISTORY_ENTRIES, TAG_BITS as HISTORY_TAG_BITS, TIMESTAMP_BITS

TABLE_WAYS = 16
TABLE_TAG_BITS = 51
TABLE_ENTRY_BITS = TABLE_TAG_BITS + ENTRY_BITS  # 87
TABLE_TAG_MASK = (1 << TABLE_TAG_BITS) - 1


class VirtualTable:
    """``sets`` x 16-way table of compressed entries, true LRU per set.

    Set index is the low log2(sets) bits of the source line; the tag is the
    next 51 bits.
    """

    def __init__(self, entries: int = 2048, ways: int = TABLE_WAYS):
        sets = entries // ways if entries else 0
        if entries and (sets * ways != entries or sets & (sets - 1)):
            raise ValueError("entries must be ways x a power of two")
        self.ways = ways
        self.sets = sets
        self.index_bits = max(sets - 1, 0).bit_length()
        self._sets: List["OrderedDict[int, CompressedEntry]"] = [OrderedDict() for _ in range(sets)]
        self.dropped = 0

    @property
    def entries(self) -> int:
        return self.sets * self.ways

    def _locate(self, line: int) -> Tuple[Optional["OrderedDict[int, CompressedEntry]"], int]:
        if not self.sets:
            return None, 0
        s = self._sets[line & (self.sets - 1)]
        return s, (line >> self.index_bits) & TABLE_TAG_MASK

    def get(self, line: int, touch: bool = True) -> Optional[CompressedEntry]:
        s, tag = self._locate(line)
        if s is None:
            return None
        e = s.get(tag)
        if e is not None and touch:
            s.move_to_end(tag)
        return e

    def install(self, line: int, entry: CompressedEntry) -> Optional[CompressedEntry]:
        """Insert or overwrite; returns the LRU victim displaced, if any."""
        s, tag = self._locate(line)
        if s is None:
            self.dropped += 1
            return None
        victim = None
        if tag in s:
            s.move_to_end(tag)
        elif len(s) >= self.ways:
            _, victim = s.popitem(last=False)
            self.dropped += 1
        s[tag] = entry
        return victim

    def pop(self, line: int) -> Optional[CompressedEntry]:
        s, tag = self._locate(line)
        if s is None:
            return None
        return s.pop(tag, None)

    def lru_order(self, set_index: int) -> List[int]:
        return list(self._sets[set_index])

    def items(self) -> Iterator[Tuple[int, CompressedEntry]]:
        """(source line low bits, entry) in set then LRU order."""
        for idx, s in enumerate(self._sets):
            for tag, e in s.items():
                yield (tag << self.index_bits) | idx, e

    def __len__(self) -> int:
        return sum(len(s) for s in self._sets)


class MetadataHierarchy:
    """Attached L1 slots in front of a :class:`VirtualTable`.

    With ``attach=False`` every entry lives in the table and every lookup pays
    ``table_delay``.
    """

    def __init__(self, table_entries: int = 2048, attach: bool = True, table_delay: int = 15):
        self.table = VirtualTable(table_entries)
        self.attach = attach
        self.table_delay = table_delay
        self.slots: Dict[int, CompressedEntry] = {}
        self.resident: Set[int] = set()

    # cache event hooks

    def on_l1_fill(self, line: int) -> None:
        self.resident.add(line)
        if self.attach:
            e = self.table.pop(line)
            if e is not None:
                self.slots[line] = e

    def on_l1_evict(self, line: int) -> None:
        self.resident.discard(line)
        if self.attach:
            e = self.slots.pop(line, None)
            if e is not None and e.live:
                self.table.install(line, e)

    # queries

    def lookup_for_trigger(self, line: int) -> Tuple[Optional[CompressedEntry], int]:
        """(entry, cycles before its prefetches may issue)."""
        if self.attach:
            e = self.slots.get(line)
            if e is not None:
                return e, 0
        e = self.table.get(line)
        if e is None:
            return None, 0
        return e, self.table_delay

    def get(self, line: int) -> Optional[CompressedEntry]:
        if self.attach and line in self.resident:
            return self.slots.get(line)
        return self.table.get(line, touch=False)

    def put(self, line: int, entry: Optional[CompressedEntry]) -> None:
        if self.attach and line in self.resident:
            if entry is None:
                self.slots.pop(line, None)
            else:
                self.slots[line] = entry
            return
        if entry is None:
            self.table.pop(line)
        else:
            self.table.install(line, entry)

    def live_sources(self) -> List[int]:
        return list(self.slots) + [src for src, _ in self.table.items()]

    def dump(self) -> bytes:
        """Debug dump: per entry, u64 source line then the 87-bit
        (payload | tag << 36) word in 11 little-endian bytes."""
        out = bytearray()
        for line, e in sorted(self.slots.items()):
            out += _dump_record(line, e, self.table.index_bits)
        for line, e in self.table.items():
            out += _dump_record(line, e, self.table.index_bits)
        return bytes(out)


def _dump_record(line: int, entry: CompressedEntry, index_bits: int) -> bytes:
    tag = (line >> index_bits) & TABLE_TAG_MASK
    word = entry.pack() | (tag << ENTRY_BITS)
    return struct.pack("<Q", line & 0xFFFF_FFFF_FFFF_FFFF) + word.to_bytes(11, "little")


@dataclass(frozen=True)
class BudgetReport:
    history_bytes: int
    attached_bytes: int
    table_bytes: int
    total_bytes: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _bytes(bits: int) -> int:
    return (bits + 7) // 8


def budget(table_entries: int = 2048, l1_lines: int = 512, history_entries: int = HISTORY_ENTRIES) -> BudgetReport:
    history = _bytes(history_entries * (HISTORY_TAG_BITS + TIMESTAMP_BITS))
    attached = _bytes(l1_lines * ENTRY_BITS)
    table = _bytes(table_entries * TABLE_ENTRY_BITS)
    return BudgetReport(history, attached, table, history + attached + table)
