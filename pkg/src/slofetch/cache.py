"""Inclusive three-level instruction-side cache model with prefetch fills.

Timing is deterministic and in-order: the fetch engine pays one issue cycle
per fetch plus the full latency of the level that served it. Prefetches are
scheduled fills that complete ``latency`` cycles after issue; a demand that
finds its line still in flight waits for the remainder (a *late* prefetch).
"""

from __future__ import annotations

import heapq
from collections import OrderedDict
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Callable, Dict, List, Optional, Tuple

LINE_BYTES = 64
TOKEN_WINDOW_CYCLES = 1000


class Level(IntEnum):
    L1 = 1
    L2 = 2
    L3 = 3
    DRAM = 4


class PrefetchStatus(Enum):
    ISSUED = "issued"
    DUPLICATE = "duplicate"
    NO_BANDWIDTH = "no_bandwidth"


class Cause(Enum):
    DEMAND = "demand"
    PREFETCH = "prefetch"


@dataclass(frozen=True)
class LevelConfig:
    size_bytes: int
    ways: int
    latency_cycles: int

    @property
    def sets(self) -> int:
        return self.size_bytes // (self.ways * LINE_BYTES)


@dataclass(frozen=True)
class CacheConfig:
    l1i: LevelConfig = LevelConfig(32 * 1024, 8, 4)
    l2: LevelConfig = LevelConfig(512 * 1024, 8, 15)
    l3: LevelConfig = LevelConfig(2 * 1024 * 1024, 16, 35)
    dram_latency_cycles: int = 200
    prefetch_bandwidth_tokens_per_kcycle: int = 48
    next_line: bool = True

    def validate(self) -> None:
        levels = (self.l1i, self.l2, self.l3)
        for lv in levels:
            if lv.ways <= 0 or lv.size_bytes <= 0 or lv.size_bytes % (lv.ways * LINE_BYTES):
                raise ValueError(f"size {lv.size_bytes} not divisible by ways x 64")
        lats = [lv.latency_cycles for lv in levels] + [self.dram_latency_cycles]
        if any(b <= a for a, b in zip(lats, lats[1:])) or lats[0] <= 0:
            raise ValueError("latencies must be positive and strictly increasing")
        if self.prefetch_bandwidth_tokens_per_kcycle <= 0:
            raise ValueError("prefetch tokens must be positive")

    def latency(self, level: Level) -> int:
        return {
            Level.L1: self.l1i.latency_cycles,
            Level.L2: self.l2.latency_cycles,
            Level.L3: self.l3.latency_cycles,
            Level.DRAM: self.dram_latency_cycles,
        }[level]


@dataclass(frozen=True)
class AccessResult:
    hit_level: Level
    latency_cycles: int
    evicted_line: Optional[int] = None
    # L1 line was brought in by a prefetch and this is its first demand
    fill_was_prefetch: bool = False
    # the line was still in flight; latency is the remaining wait
    late: bool = False

    @property
    def l1_miss(self) -> bool:
        return self.hit_level != Level.L1 or self.late


class SetAssocLRU:
    """One cache level: ``sets`` x ``ways`` with true LRU per set."""

    def __init__(self, sets: int, ways: int):
        self.sets = sets
        self.ways = ways
        self._sets: List["OrderedDict[int, None]"] = [OrderedDict() for _ in range(sets)]

    def __contains__(self, line: int) -> bool:
        return line in self._sets[line % self.sets]

    def touch(self, line: int) -> bool:
        s = self._sets[line % self.sets]
        if line in s:
            s.move_to_end(line)
            return True
        return False

    def victim_for(self, line: int) -> Optional[int]:
        """Line that inserting ``line`` would evict, if any."""
        s = self._sets[line % self.sets]
        if line in s or len(s) < self.ways:
            return None
        return next(iter(s))

    def insert(self, line: int) -> Optional[int]:
        s = self._sets[line % self.sets]
        if line in s:
            s.move_to_end(line)
            return None
        victim = None
        if len(s) >= self.ways:
            victim, _ = s.popitem(last=False)
        s[line] = None
        return victim

    def invalidate(self, line: int) -> bool:
        s = self._sets[line % self.sets]
        if line in s:
            del s[line]
            return True
        return False

    def lines(self):
        for s in self._sets:
            yield from s

    def __len__(self) -> int:
        return sum(len(s) for s in self._sets)


@dataclass(order=True)
class _InFlight:
    complete: int
    seq: int
    line: int = field(compare=False)
    level: Level = field(compare=False)
    issued: int = field(compare=False)
    tag: object = field(compare=False, default=None)
    cancelled: bool = field(compare=False, default=False)


# (evicted line, cause, time, incoming line) -> None
EvictHook = Callable[[int, Cause, int, int], None]
# (line, cause, time, tag) -> None
FillHook = Callable[[int, Cause, int, object], None]


class CacheHierarchy:
    """L1I / L2 / L3 inclusive hierarchy plus prefetch scheduling.

    Hooks:
      * ``on_l1_evict(line, cause, now, incoming)`` fires before the displacing fill lands
      * ``on_l1_fill(line, cause, now, tag)`` fires after a line enters L1
    """

    def __init__(self, config: CacheConfig = CacheConfig()):
        config.validate()
        self.config = config
        self.l1 = SetAssocLRU(config.l1i.sets, config.l1i.ways)
        self.l2 = SetAssocLRU(config.l2.sets, config.l2.ways)
        self.l3 = SetAssocLRU(config.l3.sets, config.l3.ways)
        self._lat = {lv: config.latency(lv) for lv in Level}
        self.inflight: Dict[int, _InFlight] = {}
        self._queue: List[_InFlight] = []
        self._seq = 0
        self._prefetched: Dict[int, object] = {}  # L1 lines filled by prefetch, not yet demanded
        self.evict_hooks: List[EvictHook] = []
        self.fill_hooks: List[FillHook] = []
        self.window_fills: Dict[int, int] = {}
        self.prefetch_fills = 0
        self.evictions = 0

    # -- internals ---------------------------------------------------------

    def _l1_drop(self, line: int, cause: Cause, now: int, incoming: int) -> None:
        for hook in self.evict_hooks:
            hook(line, cause, now, incoming)
        self.l1.invalidate(line)
        self._prefetched.pop(line, None)
        self.evictions += 1

    def _fill(self, line: int, cause: Cause, now: int, tag=None) -> Optional[int]:
        """Bring ``line`` into every level, back-invalidating to keep inclusion."""
        if line not in self.l3:
            v3 = self.l3.victim_for(line)
            if v3 is not None:
                self.l2.invalidate(v3)
                if v3 in self.l1:
                    self._l1_drop(v3, cause, now, line)
            self.l3.insert(line)
        # a level already holding the line served it (touched by the caller)
        # or sits below the one that did, so its LRU order is left alone
        if line not in self.l2:
            v2 = self.l2.victim_for(line)
            if v2 is not None and v2 in self.l1:
                self._l1_drop(v2, cause, now, line)
            self.l2.insert(line)
        victim = self.l1.victim_for(line)
        if victim is not None:
            self._l1_drop(victim, cause, now, line)
        self.l1.insert(line)
        if cause is Cause.PREFETCH:
            self._prefetched[line] = tag
        else:
            self._prefetched.pop(line, None)
        for hook in self.fill_hooks:
            hook(line, cause, now, tag)
        return victim

    def _nearest(self, line: int) -> Level:
        if line in self.l2:
            return Level.L2
        if line in self.l3:
            return Level.L3
        return Level.DRAM

    # -- public API --------------------------------------------------------

    def advance(self, now: int) -> None:
        """Complete every in-flight prefetch whose fill time is <= ``now``."""
        q = self._queue
        while q and q[0].complete <= now:
            f = heapq.heappop(q)
            if f.cancelled:
                continue
            del self.inflight[f.line]
            self._fill(f.line, Cause.PREFETCH, f.complete, f.tag)

    def demand_fetch(self, line: int, now: int) -> AccessResult:
        if self.l1.touch(line):
            tag = self._prefetched.pop(line, _MISSING)
            return AccessResult(Level.L1, self._lat[Level.L1], None, tag is not _MISSING)

        f = self.inflight.pop(line, None)
        if f is not None:
            f.cancelled = True
            victim = self._fill(line, Cause.PREFETCH, f.complete, f.tag)
            self._prefetched.pop(line, None)
            return AccessResult(f.level, max(f.complete - now, 0), victim, True, late=True)

        level = self._nearest(line)
        if level is Level.L2:
            self.l2.touch(line)
        elif level is Level.L3:
            self.l3.touch(line)
        victim = self._fill(line, Cause.DEMAND, now)
        return AccessResult(level, self._lat[level], victim, False)

    def inflight_tag(self, line: int):
        f = self.inflight.get(line)
        return None if f is None else f.tag

    def issue_prefetch(self, line: int, now: int, tag=None) -> PrefetchStatus:
        if line in self.l1 or line in self.inflight:
            return PrefetchStatus.DUPLICATE
        window = now // TOKEN_WINDOW_CYCLES
        used = self.window_fills.get(window, 0)
        if used >= self.config.prefetch_bandwidth_tokens_per_kcycle:
            return PrefetchStatus.NO_BANDWIDTH
        self.window_fills[window] = used + 1
        level = self._nearest(line)
        if level is Level.L2:
            self.l2.touch(line)
        elif level is Level.L3:
            self.l3.touch(line)
        self._seq += 1
        f = _InFlight(now + self._lat[level], self._seq, line, level, now, tag)
        self.inflight[line] = f
        heapq.heappush(self._queue, f)
        self.prefetch_fills += 1
        return PrefetchStatus.ISSUED

    def prefetched_unused(self, line: int):
        return self._prefetched.get(line, _MISSING)

    def check_inclusion(self) -> bool:
        return all(line in self.l2 and line in self.l3 for line in self.l1.lines()) and all(
            line in self.l3 for line in self.l2.lines()
        )


_MISSING = object()
