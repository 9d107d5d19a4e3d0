"""Entangling baseline: latency-aware history buffer and full-address table."""

from __future__ import annotations

from collections import OrderedDict, deque
from dataclasses import dataclass, field
from typing import Deque, Dict, List, NamedTuple, Optional

HISTORY_ENTRIES = 64
TAG_BITS = 58
TIMESTAMP_BITS = 20
TS_MOD = 1 << TIMESTAMP_BITS
TAG_MASK = (1 << TAG_BITS) - 1

MAX_DESTINATIONS = 8
CONF_MAX = 3


class HistoryEntry(NamedTuple):
    tag: int
    timestamp: int


def precedes(ts: int, ref: int) -> bool:
    """``ts`` is at or before ``ref`` on the 20-bit wrapping clock."""
    return (ref - ts) % TS_MOD < TS_MOD // 2


class HistoryBuffer:
    """64-entry FIFO of (line tag, 20-bit timestamp)."""

    def __init__(self, capacity: int = HISTORY_ENTRIES):
        self.capacity = capacity
        self.entries: Deque[HistoryEntry] = deque(maxlen=capacity)

    def record_fetch(self, line: int, now: int) -> None:
        self.entries.append(HistoryEntry(line & TAG_MASK, now % TS_MOD))

    def find_source(self, miss_time: int, fill_latency: int) -> Optional[int]:
        """Youngest entry old enough that a prefetch from it would have hidden
        ``fill_latency`` cycles before ``miss_time``."""
        if fill_latency <= 0:
            raise ValueError("fill_latency must be positive")
        target = (miss_time - fill_latency) % TS_MOD
        for e in reversed(self.entries):
            if precedes(e.timestamp, target):
                return e.tag
        return None

    def __len__(self) -> int:
        return len(self.entries)

    @staticmethod
    def storage_bits(capacity: int = HISTORY_ENTRIES) -> int:
        return capacity * (TAG_BITS + TIMESTAMP_BITS)


@dataclass
class Destination:
    line: int
    confidence: int = 1


@dataclass
class BaselineEntangleEntry:
    source: int
    destinations: List[Destination] = field(default_factory=list)

    def find(self, line: int) -> Optional[Destination]:
        for d in self.destinations:
            if d.line == line:
                return d
        return None

    def entangle(self, destination: int) -> None:
        d = self.find(destination)
        if d is not None:
            d.confidence = min(CONF_MAX, d.confidence + 1)
            return
        if len(self.destinations) >= MAX_DESTINATIONS:
            # list order is insertion order, so min() picks the oldest on ties
            weakest = min(range(len(self.destinations)), key=lambda i: self.destinations[i].confidence)
            del self.destinations[weakest]
        self.destinations.append(Destination(destination, 1))


# tag + 8 x (58-bit line address + 2-bit confidence)
EIP_ENTRY_BITS = 51 + MAX_DESTINATIONS * (TAG_BITS + 2)


class EntangleTable:
    """Set-associative table of :class:`BaselineEntangleEntry`, LRU per set."""

    def __init__(self, sets: int = 128, ways: int = 16):
        if sets <= 0 or sets & (sets - 1):
            raise ValueError("sets must be a power of two")
        self.sets = sets
        self.ways = ways
        self._sets: List["OrderedDict[int, BaselineEntangleEntry]"] = [OrderedDict() for _ in range(sets)]

    def get(self, source: int, touch: bool = True) -> Optional[BaselineEntangleEntry]:
        s = self._sets[source & (self.sets - 1)]
        e = s.get(source)
        if e is not None and touch:
            s.move_to_end(source)
        return e

    def entangle(self, source: int, destination: int) -> None:
        if source == destination:
            return
        s = self._sets[source & (self.sets - 1)]
        e = s.get(source)
        if e is None:
            if len(s) >= self.ways:
                s.popitem(last=False)
            e = s[source] = BaselineEntangleEntry(source)
        else:
            s.move_to_end(source)
        e.entangle(destination)

    def adjust(self, source: int, destination: int, step: int) -> None:
        e = self.get(source, touch=False)
        if e is None:
            return
        d = e.find(destination)
        if d is not None:
            d.confidence = max(0, min(CONF_MAX, d.confidence + step))

    def __len__(self) -> int:
        return sum(len(s) for s in self._sets)

    @property
    def entries(self) -> int:
        return self.sets * self.ways


def entangle(source: int, destination: int, table: EntangleTable) -> None:
    table.entangle(source, destination)


def eip_trigger(fetched_line: int, table: EntangleTable, threshold: int = 1) -> List[int]:
    e = table.get(fetched_line)
    if e is None:
        return []
    return [d.line for d in e.destinations if d.confidence >= threshold]
