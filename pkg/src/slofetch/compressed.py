"""36-bit compressed entangling entry: 20-bit window base + eight 2-bit confidences.

The base stores only the low 20 bits of the window's first line; the high
bits come from the source line when the entry is decoded. A destination is
representable only if it shares those high bits with the source.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

BASE_BITS = 20
BASE_MASK = (1 << BASE_BITS) - 1
WINDOW = 8
CONF_BITS = 2
CONF_MAX = (1 << CONF_BITS) - 1
ENTRY_BITS = BASE_BITS + WINDOW * CONF_BITS  # 36
WINDOW_LIMITS = (4, 8, 12)


class NotRepresentable(ValueError):
    """Destination lies outside the source's 2^20-line region."""


@dataclass(frozen=True)
class CompressedEntry:
    base_low20: int
    conf: Tuple[int, ...] = (0,) * WINDOW

    def __post_init__(self):
        if len(self.conf) != WINDOW:
            raise ValueError("need exactly eight confidences")
        if not 0 <= self.base_low20 <= BASE_MASK:
            raise ValueError("base must fit in 20 bits")
        if any(c < 0 or c > CONF_MAX for c in self.conf):
            raise ValueError("confidence out of [0, 3]")

    @property
    def live(self) -> bool:
        return any(self.conf)

    @property
    def marked_count(self) -> int:
        return sum(1 for c in self.conf if c)

    def base(self, source: int) -> int:
        return decode(self, source)

    def marks(self, source: int) -> dict:
        """Absolute line -> confidence for every marked offset."""
        b = decode(self, source)
        return {b + i: c for i, c in enumerate(self.conf) if c}

    def covers(self, source: int, line: int) -> bool:
        off = line - decode(self, source)
        return 0 <= off < WINDOW and self.conf[off] > 0

    def adjusted(self, source: int, line: int, step: int) -> Optional["CompressedEntry"]:
        """Copy with ``line``'s confidence moved by ``step``; None once no mark remains."""
        off = line - decode(self, source)
        if not 0 <= off < WINDOW or self.conf[off] == 0:
            return self
        conf = list(self.conf)
        conf[off] = max(0, min(CONF_MAX, conf[off] + step))
        if not any(conf):
            return None
        return CompressedEntry(self.base_low20, tuple(conf))

    # bits 0-19 base, bits 20+2i..21+2i conf[i]
    def pack(self) -> int:
        word = self.base_low20
        for i, c in enumerate(self.conf):
            word |= c << (BASE_BITS + CONF_BITS * i)
        return word

    @classmethod
    def unpack(cls, word: int) -> "CompressedEntry":
        if word >> ENTRY_BITS:
            raise ValueError("word wider than 36 bits")
        conf = tuple((word >> (BASE_BITS + CONF_BITS * i)) & CONF_MAX for i in range(WINDOW))
        return cls(word & BASE_MASK, conf)


def decode(entry: CompressedEntry, source: int) -> int:
    """Window base line: ``source`` with its low 20 bits replaced."""
    return (source & ~BASE_MASK) | entry.base_low20


def representable(source: int, destination: int) -> bool:
    return (source >> BASE_BITS) == (destination >> BASE_BITS)


def encode(window_base: int, source: int, offsets: Iterable[int] = (0,)) -> CompressedEntry:
    if not representable(source, window_base):
        raise NotRepresentable(f"{window_base:#x} not reachable from {source:#x}")
    conf = [0] * WINDOW
    for off in offsets:
        conf[off] = 1
    return CompressedEntry(window_base & BASE_MASK, tuple(conf))


def _coverage(points: Sequence[int], base: int) -> int:
    return sum(1 for p in points if base <= p < base + WINDOW)


def choose_window(marked: Sequence[int], new: int, current_base: Optional[int], region_start: int) -> int:
    """Base of the 8-line window for ``marked`` plus ``new``.

    Maximises covered marks, then prefers a window holding ``new``, then the
    current base, then the smallest base. Bases range over
    [min, max] of the marks, clamped inside the region; the current base is
    always a candidate.
    """
    points = sorted(set(marked) | {new})
    last = region_start + BASE_MASK + 1 - WINDOW
    lo = min(points[0], last)
    hi = min(points[-1], last)
    # coverage is piecewise constant; segment starts are lo, p-7 and p+1
    cands = {lo, hi}
    for p in points:
        for b in (p - WINDOW + 1, p + 1):
            if lo <= b <= hi:
                cands.add(b)
    if current_base is not None and region_start <= current_base <= last:
        cands.add(current_base)

    def key(b):
        return (_coverage(points, b), b <= new < b + WINDOW, b == current_base, -b)

    return max(cands, key=key)


def update(entry: Optional[CompressedEntry], source: int, new_destination: int) -> CompressedEntry:
    """Fold ``new_destination`` into the entry, sliding the window if that
    covers more marked lines. Raises :class:`NotRepresentable`.

    The returned entry may leave ``new_destination`` uncovered when the
    current marks outweigh it; check with :meth:`CompressedEntry.covers`.
    """
    if not representable(source, new_destination):
        raise NotRepresentable(f"{new_destination:#x} not reachable from {source:#x}")
    region_start = source & ~BASE_MASK
    if entry is not None and entry.live:
        marks = entry.marks(source)
        current = decode(entry, source)
    else:
        marks, current = {}, None

    base = choose_window(list(marks), new_destination, current, region_start)
    conf = [0] * WINDOW
    for line, c in marks.items():
        if base <= line < base + WINDOW:
            conf[line - base] = c
    off = new_destination - base
    if 0 <= off < WINDOW:
        conf[off] = min(CONF_MAX, conf[off] + 1)
    return CompressedEntry(base & BASE_MASK, tuple(conf))


def targets(entry: CompressedEntry, source: int, threshold: int = 1, window_limit: int = 8) -> List[int]:
    """Lines to prefetch. Limit 12 adds base+8..base+11 unconditionally."""
    if window_limit not in WINDOW_LIMITS:
        raise ValueError("window_limit must be 4, 8 or 12")
    base = decode(entry, source)
    span = 4 if window_limit == 4 else WINDOW
    threshold = max(threshold, 1)
    out = [base + i for i in range(span) if entry.conf[i] >= threshold]
    if window_limit == 12:
        out.extend(base + WINDOW + i for i in range(4))
    return out


def pack_entries(entries: Sequence[Optional[CompressedEntry]]) -> bytes:
    """Dense 36-bit little-endian bitstream; empty slots pack as zero."""
    acc = 0
    for i, e in enumerate(entries):
        if e is not None:
            acc |= e.pack() << (ENTRY_BITS * i)
    nbytes = (ENTRY_BITS * len(entries) + 7) // 8
    return acc.to_bytes(nbytes, "little")


def unpack_entries(data: bytes, count: int) -> List[CompressedEntry]:
    acc = int.from_bytes(data, "little")
    mask = (1 << ENTRY_BITS) - 1
    return [CompressedEntry.unpack((acc >> (ENTRY_BITS * i)) & mask) for i in range(count)]
