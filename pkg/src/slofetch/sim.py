"""Trace-driven simulation of the prefetcher variants."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Tuple

from . import compressed as cmp
from .cache import CacheConfig, CacheHierarchy, Cause, Level, PrefetchStatus
from .controller import HIT, POLLUTING, USELESS, Controller, ControllerConfig, make_features
from .eip import EIP_ENTRY_BITS, EntangleTable, HistoryBuffer, eip_trigger
from .hierarchy import MetadataHierarchy, budget
from .metrics import LATE, USEFUL, PrefetchTracker, SimulationReport, percentile
from .trace import Kind, TraceRecord


class Variant(str, Enum):
    NEXT_LINE = "NextLineOnly"
    EIP = "EIP"
    CEIP = "CEIP"
    CHEIP = "CHEIP"
    CHEIP_CTRL = "CHEIP+Controller"


@dataclass
class SimConfig:
    variant: Variant = Variant.CHEIP
    cache: CacheConfig = field(default_factory=CacheConfig)
    table_sets: int = 128
    table_ways: int = 16
    trigger_confidence: int = 1
    # CHEIP only: keep entries attached to L1 lines (False = table only)
    attach: bool = True
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    warmup_instructions: int = 0
    check_invariants: bool = False
    record_events: bool = False

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    @property
    def table_entries(self) -> int:
        return self.table_sets * self.table_ways

    @property
    def horizon(self) -> int:
        return self.controller.horizon


def storage_bytes(cfg: SimConfig) -> int:
    """On-chip metadata bytes of the configured variant."""
    v = Variant(cfg.variant)
    l1_lines = cfg.cache.l1i.size_bytes // 64
    if v is Variant.NEXT_LINE:
        return 0
    if v is Variant.EIP:
        return budget(0, 0).history_bytes + (cfg.table_entries * EIP_ENTRY_BITS + 7) // 8
    if v is Variant.CEIP:
        return budget(cfg.table_entries, 0).total_bytes
    attached = l1_lines if cfg.attach else 0
    return budget(cfg.table_entries, attached).total_bytes


# -- prefetcher front ends --------------------------------------------------


class EipPrefetcher:
    def __init__(self, cfg: SimConfig):
        self.table = EntangleTable(cfg.table_sets, cfg.table_ways)
        self.threshold = cfg.trigger_confidence
        self.trained = 0
        self.uncovered = 0

    def trigger(self, line: int, now: int, sim: "Simulator"):
        return [(t, 0, None) for t in eip_trigger(line, self.table, self.threshold)]

    def train(self, source: int, destination: int) -> int:
        self.table.entangle(source, destination)
        return 0

    def feedback(self, source: int, line: int, outcome: str) -> None:
        pass


class CompressedPrefetcher:
    def __init__(self, cfg: SimConfig, controller: Optional[Controller] = None):
        v = Variant(cfg.variant)
        if v is Variant.CEIP:
            attach, delay = False, 0
        else:
            attach, delay = cfg.attach, cfg.cache.l2.latency_cycles
        self.meta = MetadataHierarchy(cfg.table_entries, attach=attach, table_delay=delay)
        self.threshold = cfg.trigger_confidence
        self.controller = controller
        self.trained = 0
        self.uncovered = 0

    def trigger(self, line: int, now: int, sim: "Simulator"):
        entry, delay = self.meta.lookup_for_trigger(line)
        if entry is None:
            return []
        ctrl = self.controller
        if ctrl is None:
            return [(t, delay, None) for t in cmp.targets(entry, line, self.threshold, 8)]

        rate_hit, rate_pol = ctrl.source_rates(line)
        x = make_features(
            cmp.decode(entry, line) - line,
            entry.marked_count / cmp.WINDOW,
            rate_hit,
            rate_pol,
            sim.short_loop(line),
            sim.thread_tag,
        )
        d = ctrl.decide(x, now, line)
        tgts = [t for t in cmp.targets(entry, line, self.threshold, d.window) if t != line]
        d.targets = tgts
        if ctrl.shadow:
            ctrl.log_shadow(d, tgts, sum(1 for t in tgts if sim.would_fill(t)))
            return []
        if not d.issue:
            return []
        return [(t, delay, d) for t in tgts]

    def train(self, source: int, destination: int) -> int:
        """Fold the pair in; returns how many destinations the window lost
        (the new one if left out, plus old marks slid out)."""
        e = self.meta.get(source)
        try:
            new = cmp.update(e, source, destination)
        except cmp.NotRepresentable:
            return 1
        self.meta.put(source, new)
        lost = 0 if new.covers(source, destination) else 1
        if e is not None:
            kept = new.marks(source)
            lost += sum(1 for line in e.marks(source) if line not in kept)
        return lost

    def feedback(self, source: int, line: int, outcome: str) -> None:
        e = self.meta.get(source)
        if e is None:
            return
        new = e.adjusted(source, line, 1 if outcome in (USEFUL, LATE) else -1)
        if new is not e:
            self.meta.put(source, new)


# -- simulator --------------------------------------------------------------


@dataclass
class RunResult:
    report: SimulationReport
    prefetch_fills: int
    decisions: int = 0
    calibration_csv: str = ""
    events: List[tuple] = field(default_factory=list)
    window_fills: Dict[int, int] = field(default_factory=dict)


class InvariantViolation(AssertionError):
    pass


class Simulator:
    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.variant = Variant(cfg.variant)
        self.cache = CacheHierarchy(cfg.cache)
        self.controller: Optional[Controller] = None
        self.history: Optional[HistoryBuffer] = None
        self.prefetcher = None
        if self.variant is Variant.EIP:
            self.prefetcher = EipPrefetcher(cfg)
        elif self.variant is not Variant.NEXT_LINE:
            if self.variant is Variant.CHEIP_CTRL:
                self.controller = Controller(cfg.controller)
            self.prefetcher = CompressedPrefetcher(cfg, self.controller)
        if self.prefetcher is not None:
            self.history = HistoryBuffer()

        self.tracker = PrefetchTracker(cfg.horizon, cfg.cache.dram_latency_cycles, self._on_resolve)
        self.tracker.keep_log = cfg.record_events
        self.cache.fill_hooks.append(self._on_fill)
        self.cache.evict_hooks.append(self._on_evict)

        self.now = 0
        self.thread_tag = 0
        self.fetch_index = 0
        self._last_visit: Dict[int, int] = {}
        self.counting = cfg.warmup_instructions == 0
        self.events: List[tuple] = []

    # hooks

    def _on_fill(self, line: int, cause: Cause, now: int, tag) -> None:
        self.tracker.on_fill(line, cause is Cause.PREFETCH, now)
        if isinstance(self.prefetcher, CompressedPrefetcher):
            self.prefetcher.meta.on_l1_fill(line)

    def _on_evict(self, line: int, cause: Cause, now: int, incoming: int) -> None:
        self.tracker.on_evict(line, incoming if cause is Cause.PREFETCH else None, now)
        if isinstance(self.prefetcher, CompressedPrefetcher):
            self.prefetcher.meta.on_l1_evict(line)

    def _on_resolve(self, rec) -> None:
        if rec.source is not None and self.prefetcher is not None:
            self.prefetcher.feedback(rec.source, rec.line, rec.outcome)
        if rec.decision is not None:
            o = rec.outcome
            self.controller.on_outcome(rec.decision, HIT if o in (USEFUL, LATE) else (USELESS if o == "useless" else POLLUTING))

    # helpers used by the compressed front end

    def short_loop(self, line: int) -> bool:
        last = self._last_visit.get(line)
        return last is not None and self.fetch_index - last <= 32

    def would_fill(self, line: int) -> bool:
        return line not in self.cache.l1 and line not in self.cache.inflight

    def _issue(self, line: int, when: int, source=None, decision=None) -> bool:
        if self.cache.issue_prefetch(line, when) is PrefetchStatus.ISSUED:
            self.tracker.issue(line, when, self.counting, source, decision)
            return True
        return False

    def check(self) -> None:
        c = self.cache
        if not c.check_inclusion():
            raise InvariantViolation("inclusion")
        if isinstance(self.prefetcher, CompressedPrefetcher):
            meta = self.prefetcher.meta
            resident = set(c.l1.lines())
            if meta.resident != resident:
                raise InvariantViolation("hierarchy residency out of sync")
            if not set(meta.slots) <= resident:
                raise InvariantViolation("attached slot without L1 line")
            for line in meta.slots:
                if meta.table.get(line, touch=False) is not None:
                    raise InvariantViolation(f"source {line:#x} live in slot and table")

    # main loop

    def run(self, trace: Iterable[TraceRecord]) -> RunResult:
        cfg = self.cfg
        cache, tracker, ctrl = self.cache, self.tracker, self.controller
        pf, hist = self.prefetcher, self.history
        lat = {lv: cfg.cache.latency(lv) for lv in Level}
        next_line = cfg.cache.next_line
        warmup = cfg.warmup_instructions
        record = cfg.record_events
        check = cfg.check_invariants

        instructions = misses = trained = uncovered = 0
        start_cycle = 0
        rpc_open: Dict[int, Tuple[int, bool]] = {}
        rpc_lat: List[int] = []
        last_line = None
        now = 0

        for rec in trace:
            kind = rec[0]
            if kind == Kind.FETCH:
                line = rec[1] >> 6
                self.thread_tag = rec[3]
                if self.fetch_index == warmup and not self.counting:
                    self.counting = True
                    start_cycle = now
                self.fetch_index += 1
                counting = self.counting
                if counting:
                    instructions += 1
                cache.advance(now)
                tracker.advance(now)
                if ctrl is not None:
                    ctrl.tick(now)

                if pf is not None and line != last_line:
                    cands = pf.trigger(line, now, self)
                    if cands:
                        issued = 0
                        for target, delay, decision in cands:
                            if target != line and self._issue(target, now + delay, line, decision):
                                issued += 1
                        decision = cands[0][2]
                        if decision is not None and issued:
                            ctrl.register(decision, issued)

                res = cache.demand_fetch(line, now)
                tracker.on_demand(line, now, res.late, res.fill_was_prefetch)
                if res.l1_miss:
                    if counting:
                        misses += 1
                    if record:
                        self.events.append(("miss", line, now))
                    if next_line:
                        self._issue(line + 1, now)
                    if hist is not None:
                        src = hist.find_source(now, lat[res.hit_level])
                        if src is not None and src != line:
                            lost = pf.train(src, line)
                            if counting:
                                trained += 1
                                uncovered += lost
                        hist.record_fetch(line, now)
                elif res.fill_was_prefetch:
                    # tagged next-line: first use of a prefetched line keeps the stream going
                    if next_line:
                        self._issue(line + 1, now)
                    if hist is not None:
                        hist.record_fetch(line, now)

                if line != last_line:
                    self._last_visit[line] = self.fetch_index
                last_line = line
                now += 1 + res.latency_cycles
                self.now = now
                if check:
                    self.check()
            elif kind == Kind.RPC_BEGIN:
                rpc_open[rec[2]] = (now, self.counting)
                self.thread_tag = rec[3]
            else:
                began = rpc_open.pop(rec[2], None)
                if began is not None and began[1]:
                    rpc_lat.append(now - began[0])

        tracker.finish()
        if ctrl is not None:
            ctrl.tick(now)

        report = self._report(instructions, now - start_cycle, misses, trained, uncovered, rpc_lat)
        return RunResult(
            report=report,
            prefetch_fills=cache.prefetch_fills,
            decisions=len(ctrl.calibration) if ctrl is not None else 0,
            calibration_csv=ctrl.calibration_csv() if ctrl is not None and ctrl.shadow else "",
            events=self.events + [("prefetch", r.line, r.outcome, r.counted) for r in tracker.resolved],
            window_fills=dict(cache.window_fills),
        )

    def _report(self, instructions, cycles, misses, trained, uncovered, rpc_lat) -> SimulationReport:
        c = self.tracker.counts
        issued = self.tracker.issued
        kilo = instructions / 1000.0 if instructions else 0.0
        useful = c[USEFUL]
        lat = {"p50": 0, "p95": 0, "p99": 0}
        if rpc_lat:
            lat = {"p50": percentile(rpc_lat, 0.5), "p95": percentile(rpc_lat, 0.95), "p99": percentile(rpc_lat, 0.99)}
        return SimulationReport(
            variant=self.variant.value,
            instructions=instructions,
            cycles=cycles,
            l1i_misses=misses,
            mpki=misses / kilo if kilo else 0.0,
            mpki_reduction_vs_baseline=0.0,
            issued=issued,
            useful=useful,
            useless=c["useless"],
            late=c[LATE],
            polluting=c["polluting"],
            accuracy=useful / issued if issued else 0.0,
            coverage=useful / (useful + misses) if useful + misses else 0.0,
            bandwidth_fills_per_kilo_instr=issued / kilo if kilo else 0.0,
            rpc_latencies=lat,
            utility=0.0,
            uncovered_destination_fraction=uncovered / trained if trained else 0.0,
        )


def simulate(trace: Iterable[TraceRecord], cfg: SimConfig) -> RunResult:
    return Simulator(cfg).run(trace)
