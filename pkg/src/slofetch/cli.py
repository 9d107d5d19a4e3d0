"""Experiment runner.

Subcommands: ``generate``, ``run``, ``compare``, ``budget``, ``stats``.

Exit codes:
    0  success
    2  usage error (bad command line)
    3  configuration error
    4  I/O error
    5  malformed trace file
    6  invalid synthetic workload spec
    7  mismatched trace sources / instruction counts
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from . import config as cfgmod
from .config import ConfigError, RunConfig
from .hierarchy import budget
from .metrics import MismatchedTraces, SimulationReport, compare, comparison_csv, utility
from .sim import SimConfig, Variant, simulate, storage_bytes
from .trace import InvalidSpec, TraceError, cluster_stats, generate_synthetic, save_trace

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_TRACE = 5
EXIT_SPEC = 6
EXIT_MISMATCH = 7


def _stats_json(records) -> dict:
    st = cluster_stats(records)
    return {
        "delta20_fraction": st.delta20_fraction,
        "window8_fraction": st.window8_fraction,
        "per_window_histogram": {str(k): v for k, v in st.per_window_histogram.items()},
        "pair_count": st.pair_count,
        "destination_count": st.destination_count,
    }


# -- commands ---------------------------------------------------------------


def cmd_generate(rc: RunConfig, out_path) -> dict:
    records = generate_synthetic(rc.workload)
    save_trace(out_path, records)
    return _stats_json(records)


def _check_warmup(rc: RunConfig, records) -> None:
    fetches = sum(1 for r in records if r[0] == 0)
    if rc.sim.warmup_instructions >= fetches:
        raise ConfigError(f"warmup_instructions ({rc.sim.warmup_instructions}) must be below trace length ({fetches})")


def _with_baseline(variant: SimulationReport, baseline: SimulationReport) -> SimulationReport:
    red = (baseline.mpki - variant.mpki) / baseline.mpki if baseline.mpki else 0.0
    return dataclasses.replace(variant, mpki_reduction_vs_baseline=red, utility=utility(baseline, variant))


def cmd_run(rc: RunConfig, records=None):
    """Simulate one variant; metrics relative to NextLineOnly on the same trace.

    Returns (report, run result).
    """
    if records is None:
        records = rc.load_records()
    _check_warmup(rc, records)
    result = simulate(records, rc.sim)
    report = result.report
    if Variant(rc.sim.variant) is not Variant.NEXT_LINE:
        base = simulate(records, rc.sim.replace(variant=Variant.NEXT_LINE)).report
        report = _with_baseline(report, base)
    result.report = report
    return report, result


def cmd_compare(configs: Sequence[RunConfig]) -> str:
    if not configs:
        raise ConfigError("compare needs at least one config")
    source = configs[0].trace_source()
    for rc in configs[1:]:
        if rc.trace_source() != source:
            raise MismatchedTraces("configs name different trace sources")
    records = configs[0].load_records()
    for rc in configs:
        _check_warmup(rc, records)

    first = configs[0].sim
    base = simulate(records, first.replace(variant=Variant.NEXT_LINE)).report
    reports = []
    for rc in sorted(configs, key=lambda c: c.name):
        rep = simulate(records, rc.sim).report
        rep = dataclasses.replace(_with_baseline(rep, base), variant=rc.name)
        reports.append((rc, rep))
    rows = compare(base, [r for _, r in reports])
    for row, (rc, _) in zip(rows, reports):
        row.extra["storage_bytes"] = storage_bytes(rc.sim)
    return comparison_csv(rows, extra_columns=("storage_bytes",))


def cmd_budget(rc: RunConfig) -> dict:
    sim = rc.sim
    l1_lines = sim.cache.l1i.size_bytes // 64 if sim.attach else 0
    return dataclasses.asdict(budget(sim.table_entries, l1_lines))


# -- argument handling ------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", action="append", default=[], help="config file (compare accepts several)")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", default=None, help="output path (default: stdout)")
    common.add_argument("--format", choices=("json", "csv"), default=None)

    p = argparse.ArgumentParser(prog="slofetch", description="instruction prefetch simulator")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write a synthetic trace")
    sub.add_parser("run", parents=[common], help="simulate one variant")
    cp = sub.add_parser("compare", parents=[common], help="compare variants on one trace")
    cp.add_argument("--variants", default=None, help="comma list; one run per variant using the first config")
    sub.add_parser("budget", parents=[common], help="metadata storage budget")
    sp = sub.add_parser("stats", parents=[common], help="clustering statistics of a trace file")
    sp.add_argument("trace")
    return p


def _run_config(paths: Sequence[str], overrides: dict, seed: Optional[int]) -> RunConfig:
    values = {}
    for path in paths:
        values.update(cfgmod.load_config(path))
    values.update(overrides)
    if seed is not None:
        values["seed"] = seed
    return cfgmod.build(values)


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _dispatch(args, overrides) -> int:
    if args.command == "stats":
        from .trace import load_trace

        _emit(json.dumps(_stats_json(list(load_trace(args.trace))), sort_keys=True, indent=2) + "\n", args.out)
        return EXIT_OK

    if args.command == "compare":
        paths = list(args.config)
        if args.variants:
            rc0 = _run_config(paths[:1], overrides, args.seed)
            rcs = []
            for name in args.variants.split(","):
                try:
                    v = Variant(name.strip())
                except ValueError:
                    raise ConfigError(f"unknown variant {name!r}") from None
                rcs.append(dataclasses.replace(rc0, sim=rc0.sim.replace(variant=v), label=None))
        else:
            rcs = [_run_config([p], overrides, args.seed) for p in paths] or [_run_config([], overrides, args.seed)]
        text = cmd_compare(rcs)
        _emit(text, args.out or rcs[0].compare_path)
        return EXIT_OK

    rc = _run_config(args.config, overrides, args.seed)
    if args.command == "generate":
        out = args.out or rc.trace_path
        if not out:
            raise ConfigError("generate needs --out or trace.path")
        stats = cmd_generate(rc, out)
        sys.stdout.write(json.dumps(stats, sort_keys=True, indent=2) + "\n")
    elif args.command == "run":
        report, result = cmd_run(rc)
        if args.format == "csv":
            d = dataclasses.asdict(report)
            lat = d.pop("rpc_latencies")
            d.update({f"rpc_{k}": v for k, v in lat.items()})
            text = ",".join(d) + "\n" + ",".join(str(x) for x in d.values()) + "\n"
        else:
            text = report.to_json()
        _emit(text, args.out or rc.report_path)
        if rc.calibration_path and result.calibration_csv:
            Path(rc.calibration_path).write_text(result.calibration_csv)
    elif args.command == "budget":
        _emit(json.dumps(cmd_budget(rc), sort_keys=True, indent=2) + "\n", args.out)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = _parser()
    args, rest = parser.parse_known_args(argv)
    try:
        overrides = cfgmod.parse_overrides(rest)
        return _dispatch(args, overrides)
    except ConfigError as e:
        print(f"slofetch: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except TraceError as e:
        print(f"slofetch: bad trace: {e}", file=sys.stderr)
        return EXIT_TRACE
    except InvalidSpec as e:
        print(f"slofetch: invalid workload spec: {e}", file=sys.stderr)
        return EXIT_SPEC
    except MismatchedTraces as e:
        print(f"slofetch: {e}", file=sys.stderr)
        return EXIT_MISMATCH
    except OSError as e:
        print(f"slofetch: I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
