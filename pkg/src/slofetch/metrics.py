"""Prefetch outcome classification, latency percentiles, reports and utility."""

from __future__ import annotations

import csv
import heapq
import io
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence

USEFUL, USELESS, LATE, POLLUTING = "useful", "useless", "late", "polluting"


class EmptySample(ValueError):
    pass


class MismatchedTraces(ValueError):
    pass


def classify_prefetch(demanded_in_flight: bool, demanded_after_fill: bool, displaced_remissed: bool) -> str:
    """Pollution wins over usefulness; then late, useful, useless."""
    if displaced_remissed:
        return POLLUTING
    if demanded_in_flight:
        return LATE
    if demanded_after_fill:
        return USEFUL
    return USELESS


@dataclass
class PrefetchRecord:
    line: int
    issue_time: int
    matures: int
    seq: int
    counted: bool = True
    source: Optional[int] = None
    decision: object = None
    fill_time: Optional[int] = None
    demand: Optional[str] = None  # USEFUL or LATE
    polluting: bool = False
    victim: Optional[int] = None
    outcome: Optional[str] = None

    def __lt__(self, other: "PrefetchRecord") -> bool:
        return (self.matures, self.seq) < (other.matures, other.seq)


class PrefetchTracker:
    """Follows every issued prefetch until it can be classified.

    A record matures ``horizon`` cycles after its latest possible fill; at
    that point it is resolved with :func:`classify_prefetch` and handed to
    ``on_resolve``.
    """

    def __init__(self, horizon: int, max_latency: int, on_resolve: Optional[Callable[[PrefetchRecord], None]] = None):
        self.horizon = horizon
        self.max_latency = max_latency
        self.on_resolve = on_resolve
        self.by_line: Dict[int, PrefetchRecord] = {}
        self.ghosts: Dict[int, PrefetchRecord] = {}
        self._heap: List[PrefetchRecord] = []
        self._seq = 0
        self.counts = {USEFUL: 0, USELESS: 0, LATE: 0, POLLUTING: 0}
        self.issued = 0
        self.resolved: List[PrefetchRecord] = []
        self.keep_log = False

    def issue(self, line: int, now: int, counted: bool = True, source=None, decision=None) -> PrefetchRecord:
        self._seq += 1
        rec = PrefetchRecord(line, now, now + self.max_latency + self.horizon, self._seq, counted, source, decision)
        self.by_line[line] = rec
        heapq.heappush(self._heap, rec)
        if counted:
            self.issued += 1
        return rec

    def on_fill(self, line: int, prefetch: bool, now: int) -> None:
        ghost = self.ghosts.pop(line, None)
        if ghost is not None and not prefetch and ghost.fill_time is not None and now <= ghost.fill_time + self.horizon:
            ghost.polluting = True
        if prefetch:
            rec = self.by_line.get(line)
            if rec is not None and rec.fill_time is None:
                rec.fill_time = now

    def on_evict(self, line: int, by_prefetch_of: Optional[int], now: int) -> None:
        if by_prefetch_of is not None:
            rec = self.by_line.get(by_prefetch_of)
            if rec is not None and rec.victim is None:
                rec.victim = line
                self.ghosts[line] = rec
        # prefetched line leaving before it was demanded: stays useless
        rec = self.by_line.get(line)
        if rec is not None and rec.fill_time is not None:
            del self.by_line[line]

    def on_demand(self, line: int, now: int, late: bool, first_use: bool) -> None:
        if not (late or first_use):
            return
        rec = self.by_line.pop(line, None)
        if rec is None:
            return
        if late:
            rec.demand = LATE
        elif rec.fill_time is not None and now <= rec.fill_time + self.horizon:
            rec.demand = USEFUL

    def _resolve(self, rec: PrefetchRecord) -> None:
        rec.outcome = classify_prefetch(rec.demand == LATE, rec.demand == USEFUL, rec.polluting)
        if self.by_line.get(rec.line) is rec:
            del self.by_line[rec.line]
        if rec.victim is not None and self.ghosts.get(rec.victim) is rec:
            del self.ghosts[rec.victim]
        if rec.counted:
            self.counts[rec.outcome] += 1
        if self.keep_log:
            self.resolved.append(rec)
        if self.on_resolve is not None:
            self.on_resolve(rec)

    def advance(self, now: int) -> None:
        h = self._heap
        while h and h[0].matures <= now:
            self._resolve(heapq.heappop(h))

    def finish(self) -> None:
        while self._heap:
            self._resolve(heapq.heappop(self._heap))

    @property
    def pending(self) -> int:
        return len(self._heap)


# -- percentiles ------------------------------------------------------------


def percentile(samples: Sequence[float], q: float) -> float:
    """Nearest-rank percentile: the ceil(q*N)-th smallest sample (1-based)."""
    n = len(samples)
    if n == 0:
        raise EmptySample("percentile of empty sample")
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must be in [0, 1]")
    rank = max(1, math.ceil(Fraction(str(q)) * n))
    return sorted(samples)[rank - 1]


# -- reports ----------------------------------------------------------------


@dataclass
class SimulationReport:
    variant: str
    instructions: int
    cycles: int
    l1i_misses: int
    mpki: float
    mpki_reduction_vs_baseline: float
    issued: int
    useful: int
    useless: int
    late: int
    polluting: int
    accuracy: float
    coverage: float
    bandwidth_fills_per_kilo_instr: float
    rpc_latencies: Dict[str, float]
    utility: float
    uncovered_destination_fraction: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationReport":
        return cls(**d)


@dataclass(frozen=True)
class UtilityWeights:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    delta: float = 1.0

    def __post_init__(self):
        for v in (self.alpha, self.beta, self.gamma, self.delta):
            if not math.isfinite(v) or v < 0:
                raise ValueError("utility weights must be finite and non-negative")


EPS = 1e-9


def _rel_drop(base: float, var: float) -> float:
    if base <= 0:
        return 0.0
    return max(0.0, base - var) / base


def utility(baseline: SimulationReport, variant: SimulationReport, weights: UtilityWeights = UtilityWeights()) -> float:
    """Dimensionless utility: relative P95 and MPKI gains minus relative
    bandwidth growth and extra harmful evictions per kilo-instruction."""
    if baseline.instructions != variant.instructions:
        raise MismatchedTraces(f"{baseline.instructions} vs {variant.instructions} instructions")
    p95_gain = _rel_drop(baseline.rpc_latencies.get("p95", 0.0), variant.rpc_latencies.get("p95", 0.0))
    mpki_gain = _rel_drop(baseline.mpki, variant.mpki)
    bw_base = baseline.bandwidth_fills_per_kilo_instr
    bw_cost = max(0.0, variant.bandwidth_fills_per_kilo_instr - bw_base) / max(bw_base, EPS)
    evict_cost = max(0, variant.polluting - baseline.polluting) / max(variant.instructions / 1000.0, 1.0)
    return weights.alpha * p95_gain + weights.beta * mpki_gain - weights.gamma * bw_cost - weights.delta * evict_cost


def speedup(baseline_cycles: int, variant_cycles: int) -> float:
    return baseline_cycles / variant_cycles


COMPARE_COLUMNS = (
    "variant", "speedup", "mpki_reduction", "accuracy", "coverage",
    "bandwidth", "p95", "utility", "uncovered_fraction",
)


@dataclass
class ComparisonRow:
    variant: str
    speedup: float
    mpki_reduction: float
    accuracy: float
    coverage: float
    bandwidth: float
    p95: float
    utility: float
    uncovered_fraction: float
    extra: Dict[str, object] = field(default_factory=dict)


def compare(baseline: SimulationReport, variants: Sequence[SimulationReport]) -> List[ComparisonRow]:
    rows = []
    for v in variants:
        if v.instructions != baseline.instructions:
            raise MismatchedTraces(f"{v.variant}: instruction count differs from baseline")
        rows.append(
            ComparisonRow(
                variant=v.variant,
                speedup=speedup(baseline.cycles, v.cycles),
                mpki_reduction=_signed_rel(baseline.mpki, v.mpki),
                accuracy=v.accuracy,
                coverage=v.coverage,
                bandwidth=v.bandwidth_fills_per_kilo_instr,
                p95=v.rpc_latencies.get("p95", 0.0),
                utility=utility(baseline, v),
                uncovered_fraction=v.uncovered_destination_fraction,
            )
        )
    return rows


def _signed_rel(base: float, var: float) -> float:
    return (base - var) / base if base > 0 else 0.0


def relative_speedup_reduction(reference_speedup: float, variant_speedup: float) -> float:
    """How far ``variant`` falls short of ``reference``, as a fraction."""
    return (reference_speedup - variant_speedup) / reference_speedup


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    from scipy.stats import spearmanr

    if len(xs) != len(ys) or len(xs) < 2:
        raise ValueError("need two equal-length samples of size >= 2")
    rho = spearmanr(xs, ys).statistic
    return float(rho)


def comparison_csv(rows: Sequence[ComparisonRow], extra_columns: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(COMPARE_COLUMNS) + list(extra_columns))
    for r in rows:
        vals = [getattr(r, c) for c in COMPARE_COLUMNS] + [r.extra.get(c, "") for c in extra_columns]
        w.writerow([_fmt(v) for v in vals])
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(round(v, 9))
    return str(v)
