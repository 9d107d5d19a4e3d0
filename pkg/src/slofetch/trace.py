"""Instruction-fetch traces: binary format, synthetic generator, clustering stats.

A trace is a stream of :class:`TraceRecord`. Fetch records carry a byte
address; RpcBegin/RpcEnd records bracket one request so per-RPC latency can
be measured by the simulator.

File layout: ``b"SLOF"`` + u32 version (=1), then 10-byte records
``<kind:u8><thread_tag:u8><payload:u64 LE>``.
"""

from __future__ import annotations

import dataclasses
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, NamedTuple, Optional, Sequence

import numpy as np

LINE_SHIFT = 6
MAGIC = b"SLOF"
VERSION = 1
HEADER_SIZE = 8
RECORD_SIZE = 10
LOW20_MASK = (1 << 20) - 1

_RECORD_DTYPE = np.dtype([("kind", "u1"), ("tag", "u1"), ("payload", "<u8")])
assert _RECORD_DTYPE.itemsize == RECORD_SIZE


class Kind(IntEnum):
    FETCH = 0
    RPC_BEGIN = 1
    RPC_END = 2


class TraceRecord(NamedTuple):
    kind: Kind
    address: int = 0
    rpc_id: int = 0
    thread_tag: int = 0

    @property
    def line(self) -> int:
        return self.address >> LINE_SHIFT


def fetch(address: int, thread_tag: int = 0) -> TraceRecord:
    return TraceRecord(Kind.FETCH, address, 0, thread_tag)


def rpc_begin(rpc_id: int, thread_tag: int = 0) -> TraceRecord:
    return TraceRecord(Kind.RPC_BEGIN, 0, rpc_id, thread_tag)


def rpc_end(rpc_id: int, thread_tag: int = 0) -> TraceRecord:
    return TraceRecord(Kind.RPC_END, 0, rpc_id, thread_tag)


# -- errors -----------------------------------------------------------------


class TraceError(Exception):
    """Malformed trace file. ``offset`` is the byte offset of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class BadMagic(TraceError):
    pass


class TruncatedRecord(TraceError):
    pass


class UnknownKind(TraceError):
    pass


class UnmatchedRpcEnd(TraceError):
    pass


class InvalidSpec(ValueError):
    pass


class EmptyTrace(ValueError):
    pass


# -- binary format ----------------------------------------------------------


def encode_records(records: Iterable[TraceRecord]) -> bytes:
    recs = list(records)
    arr = np.zeros(len(recs), dtype=_RECORD_DTYPE)
    for i, r in enumerate(recs):
        payload = r.address if r.kind == Kind.FETCH else r.rpc_id
        arr[i] = (int(r.kind), r.thread_tag & 0xFF, payload & 0xFFFF_FFFF_FFFF_FFFF)
    return MAGIC + struct.pack("<I", VERSION) + arr.tobytes()


def save_trace(path, records: Iterable[TraceRecord]) -> int:
    """Write ``records`` to ``path``; returns the number of records written."""
    data = encode_records(records)
    Path(path).write_bytes(data)
    return (len(data) - HEADER_SIZE) // RECORD_SIZE


def decode_records(data: bytes) -> Iterator[TraceRecord]:
    if len(data) < HEADER_SIZE or data[:4] != MAGIC:
        raise BadMagic("missing SLOF magic", 0)
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise BadMagic(f"unsupported trace version {version}", 4)

    body = len(data) - HEADER_SIZE
    whole = body // RECORD_SIZE
    arr = np.frombuffer(data, dtype=_RECORD_DTYPE, count=whole, offset=HEADER_SIZE)

    open_rpcs: Dict[int, int] = {}
    for i, (kind, tag, payload) in enumerate(arr.tolist()):
        offset = HEADER_SIZE + i * RECORD_SIZE
        if kind == Kind.FETCH:
            yield TraceRecord(Kind.FETCH, payload, 0, tag)
        elif kind == Kind.RPC_BEGIN:
            open_rpcs[payload] = open_rpcs.get(payload, 0) + 1
            yield TraceRecord(Kind.RPC_BEGIN, 0, payload, tag)
        elif kind == Kind.RPC_END:
            if not open_rpcs.get(payload):
                raise UnmatchedRpcEnd(f"RpcEnd({payload}) without RpcBegin", offset)
            open_rpcs[payload] -= 1
            yield TraceRecord(Kind.RPC_END, 0, payload, tag)
        else:
            raise UnknownKind(f"unknown record kind {kind}", offset)

    if body % RECORD_SIZE:
        raise TruncatedRecord("partial record", HEADER_SIZE + whole * RECORD_SIZE)


def load_trace(path) -> Iterator[TraceRecord]:
    """Yield the records of a trace file in file order.

    Raises a :class:`TraceError` subclass carrying the byte offset of the
    first fault. Records before the fault are yielded first.
    """
    return decode_records(Path(path).read_bytes())


# -- synthetic workloads ----------------------------------------------------


@dataclass(frozen=True)
class SyntheticWorkloadSpec:
    seed: int = 1
    function_count: int = 300
    mean_function_lines: int = 16
    call_depth_max: int = 4
    loop_probability: float = 0.08
    call_probability: float = 0.12
    phase_churn_probability: float = 0.02
    footprint_lines: int = 6000
    rpc_length_mean: int = 3000
    record_count: int = 150_000
    # alternative callees per call site; raising it disperses destinations
    indirect_fanout: int = 2
    # fetch records emitted per visit of a line, drawn uniformly from [1, max]
    fetches_per_line_max: int = 6
    # fraction of code lines relocated to random far slots (0 = contiguous)
    layout_scatter: float = 0.0

    def validate(self) -> None:
        for name in ("function_count", "mean_function_lines", "footprint_lines",
                     "rpc_length_mean", "record_count", "indirect_fanout",
                     "fetches_per_line_max"):
            if getattr(self, name) <= 0:
                raise InvalidSpec(f"{name} must be positive")
        if self.call_depth_max < 0:
            raise InvalidSpec("call_depth_max must be non-negative")
        for name in ("loop_probability", "call_probability", "phase_churn_probability", "layout_scatter"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise InvalidSpec(f"{name} must be in [0, 1]")
        if not 0 <= self.seed < 2**64:
            raise InvalidSpec("seed must fit in 64 bits")

    def replace(self, **changes) -> "SyntheticWorkloadSpec":
        return dataclasses.replace(self, **changes)


# code region: line 0x2_0000_0000, i.e. byte address 0x80_0000_0000
CODE_BASE_LINE = 0x2_0000_0000
_HANDLER_COUNT = 32


@dataclass
class _Function:
    start: int
    length: int
    # offset -> list of callee indices (one is chosen per call)
    calls: Dict[int, List[int]] = field(default_factory=dict)
    # offset -> (loop head offset, max extra iterations)
    loops: Dict[int, tuple] = field(default_factory=dict)


class _Generator:
    def __init__(self, spec: SyntheticWorkloadSpec):
        self.spec = spec
        self.rng = np.random.default_rng(spec.seed)
        self.functions = self._layout()
        self.handlers = self._pick_handlers()
        self.relocated = self._scatter()
        self.records: List[TraceRecord] = []

    def _layout(self) -> List[_Function]:
        spec, rng = self.spec, self.rng
        funcs: List[_Function] = []
        cursor = 0
        for _ in range(spec.function_count):
            length = int(rng.geometric(1.0 / spec.mean_function_lines))
            if cursor + length > spec.footprint_lines:
                length = spec.footprint_lines - cursor
                if length <= 0:
                    break
            funcs.append(_Function(CODE_BASE_LINE + cursor, length))
            cursor += length
        n = len(funcs)
        for f in funcs:
            for off in range(f.length):
                if spec.call_probability and rng.random() < spec.call_probability:
                    f.calls[off] = [int(c) for c in rng.integers(0, n, spec.indirect_fanout)]
                elif off > 0 and spec.loop_probability and rng.random() < spec.loop_probability:
                    head = int(rng.integers(0, off + 1))
                    f.loops[off] = (head, int(rng.integers(1, 4)))
        return funcs

    def _scatter(self) -> Dict[int, int]:
        spec = self.spec
        if not spec.layout_scatter:
            return {}
        # own stream so the control flow is identical across scatter levels
        rng = np.random.default_rng([spec.seed, 1])
        lines = [f.start + i for f in self.functions for i in range(f.length)]
        moved = [ln for ln in lines if rng.random() < spec.layout_scatter]
        if not moved:
            return {}
        # far slots stay inside the source's 2^20-line region
        region = min(8 * len(lines), (1 << 20) - len(lines) - 1)
        slots = rng.choice(region, size=len(moved), replace=False)
        far = CODE_BASE_LINE + len(lines)
        return {ln: far + int(s) for ln, s in zip(moved, slots)}

    def _pick_handlers(self) -> np.ndarray:
        k = min(_HANDLER_COUNT, len(self.functions))
        return self.rng.choice(len(self.functions), size=k, replace=False)

    def _handler_weights(self) -> np.ndarray:
        ranks = np.arange(1, len(self.handlers) + 1, dtype=float)
        w = 1.0 / ranks
        return w / w.sum()

    def run(self) -> List[TraceRecord]:
        spec, rng = self.spec, self.rng
        weights = self._handler_weights()
        rpc_id = 0
        n = spec.record_count
        while len(self.records) < n:
            remaining = n - len(self.records)
            tag = int(rng.integers(0, 8))
            if remaining < 3:
                self._emit_plain(remaining, tag)
                break
            if spec.phase_churn_probability and rng.random() < spec.phase_churn_probability:
                self._churn()
            budget = max(1, int(rng.exponential(spec.rpc_length_mean)))
            budget = min(budget, remaining - 2)
            self.records.append(rpc_begin(rpc_id, tag))
            self._budget = budget
            while self._budget > 0:
                h = int(self.handlers[rng.choice(len(self.handlers), p=weights)])
                self._exec(h, 0, tag)
            self.records.append(rpc_end(rpc_id, tag))
            rpc_id += 1
        return self.records

    def _churn(self) -> None:
        # a rollout swaps one handler and one call site's targets
        rng = self.rng
        i = int(rng.integers(0, len(self.handlers)))
        self.handlers[i] = int(rng.integers(0, len(self.functions)))
        f = self.functions[int(rng.integers(0, len(self.functions)))]
        if f.calls:
            off = sorted(f.calls)[int(rng.integers(0, len(f.calls)))]
            f.calls[off] = [int(c) for c in rng.integers(0, len(self.functions), self.spec.indirect_fanout)]

    def _emit_line(self, line: int, tag: int) -> None:
        line = self.relocated.get(line, line)
        k = int(self.rng.integers(1, self.spec.fetches_per_line_max + 1))
        k = min(k, self._budget)
        base = line << LINE_SHIFT
        step = 64 // max(k, 1)
        for j in range(k):
            self.records.append(TraceRecord(Kind.FETCH, base + j * step, 0, tag))
        self._budget -= k

    def _emit_plain(self, count: int, tag: int) -> None:
        f = self.functions[int(self.handlers[0])]
        for j in range(count):
            line = f.start + j % f.length
            self.records.append(fetch(line << LINE_SHIFT, tag))

    def _exec(self, fi: int, depth: int, tag: int) -> None:
        f = self.functions[fi]
        rng = self.rng
        trips: Dict[int, int] = {}
        off = 0
        while off < f.length and self._budget > 0:
            self._emit_line(f.start + off, tag)
            callees = f.calls.get(off)
            if callees is not None and depth < self.spec.call_depth_max:
                callee = callees[int(rng.integers(0, len(callees)))] if len(callees) > 1 else callees[0]
                self._exec(callee, depth + 1, tag)
                if self._budget > 0:
                    # return lands back in the caller's line
                    self._emit_line(f.start + off, tag)
            loop = f.loops.get(off)
            if loop is not None:
                head, max_extra = loop
                left = trips.get(off)
                if left is None:
                    left = int(rng.integers(0, max_extra + 1))
                if left > 0:
                    trips[off] = left - 1
                    off = head
                    continue
                trips.pop(off, None)
            off += 1


def generate_synthetic(spec: SyntheticWorkloadSpec) -> List[TraceRecord]:
    """Deterministic microservice-like fetch stream for ``spec``.

    Functions are laid out as contiguous line ranges. Execution walks them
    with fall-through, loop back-edges and (possibly indirect) calls, inside
    RpcBegin/RpcEnd pairs. Exactly ``spec.record_count`` records are produced.
    """
    spec.validate()
    return _Generator(spec).run()


# -- clustering statistics --------------------------------------------------


@dataclass
class ClusterStats:
    delta20_fraction: float
    window8_fraction: float
    per_window_histogram: Dict[int, int]
    pair_count: int = 0
    destination_count: int = 0


def miss_lines(trace: Iterable[TraceRecord], sets: int = 64, ways: int = 8) -> List[int]:
    """Lines that miss in a cold LRU L1 (default 512 lines, 8-way)."""
    from collections import OrderedDict

    table = [OrderedDict() for _ in range(sets)]
    misses = []
    for r in trace:
        if r.kind != Kind.FETCH:
            continue
        line = r.address >> LINE_SHIFT
        s = table[line % sets]
        if line in s:
            s.move_to_end(line)
            continue
        misses.append(line)
        if len(s) >= ways:
            s.popitem(last=False)
        s[line] = None
    return misses


def representable(source: int, destination: int) -> bool:
    return (source >> 20) == (destination >> 20)


def best_window_cover(lines: Sequence[int], size: int) -> int:
    """Max number of ``lines`` inside any window of ``size`` consecutive lines."""
    pts = sorted(set(lines))
    best = 0
    j = 0
    for i, start in enumerate(pts):
        while j < len(pts) and pts[j] <= start + size - 1:
            j += 1
        best = max(best, j - i)
    return best


def cluster_stats(trace: Iterable[TraceRecord], window_sizes: Sequence[int] = (4, 8, 12, 16)) -> ClusterStats:
    misses = miss_lines(trace)
    if len(misses) < 2:
        raise EmptyTrace("trace has fewer than two misses")

    near = 0
    dests: Dict[int, set] = {}
    for src, dst in zip(misses, misses[1:]):
        if representable(src, dst):
            near += 1
        dests.setdefault(src, set()).add(dst)
    pairs = len(misses) - 1

    sizes = sorted(set(window_sizes) | {8})
    total = sum(len(d) for d in dests.values())
    covered = {w: sum(best_window_cover(d, w) for d in dests.values()) for w in sizes}
    return ClusterStats(
        delta20_fraction=near / pairs,
        window8_fraction=covered[8] / total,
        per_window_histogram={w: covered[w] for w in sorted(set(window_sizes))},
        pair_count=pairs,
        destination_count=total,
    )
