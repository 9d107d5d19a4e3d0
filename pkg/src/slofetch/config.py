"""Run configuration: a flat ``key = value`` text file with dotted keys.

Example::

    variant = CHEIP
    seed = 7
    warmup_instructions = 20000
    workload.record_count = 150000
    l1i.size_kb = 32
    eip.sets = 128
    ctrl.shadow = false

Lines starting with ``#`` are comments. Every key may also be given on the
command line as ``--<key> <value>``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Tuple

from .cache import CacheConfig, LevelConfig
from .controller import ControllerConfig
from .sim import SimConfig, Variant
from .trace import SyntheticWorkloadSpec, generate_synthetic, load_trace


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int(text: str) -> int:
    return int(text.replace("_", ""), 0)


KEYS: Dict[str, Callable[[str], object]] = {
    "variant": str,
    "label": str,
    "seed": _int,
    "warmup_instructions": _int,
    "trace.path": str,
    "l1i.size_kb": _int, "l1i.ways": _int, "l1i.latency": _int,
    "l2.size_kb": _int, "l2.ways": _int, "l2.latency": _int,
    "l3.size_kb": _int, "l3.ways": _int, "l3.latency": _int,
    "dram.latency": _int,
    "prefetch.tokens_per_kcycle": _int,
    "prefetch.next_line": _bool,
    "eip.sets": _int, "eip.ways": _int, "eip.trigger_confidence": _int,
    "cheip.attach": _bool,
    "ctrl.lr": float, "ctrl.epsilon": float, "ctrl.period": _int, "ctrl.horizon": _int,
    "ctrl.shadow": _bool, "ctrl.lambda_useless": float, "ctrl.lambda_evict": float,
    "out.report": str, "out.calibration": str, "out.compare": str,
}
for _f in dataclasses.fields(SyntheticWorkloadSpec):
    KEYS[f"workload.{_f.name}"] = float if _f.type in ("float", float) else _int


def parse_config_text(text: str, origin: str = "<config>") -> Dict[str, object]:
    values: Dict[str, object] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{n}: expected key = value")
        key, val = (p.strip() for p in line.split("=", 1))
        values[key] = coerce(key, val, f"{origin}:{n}")
    return values


def coerce(key: str, value: str, where: str = "") -> object:
    conv = KEYS.get(key)
    if conv is None:
        raise ConfigError(f"{where}: unknown key {key!r}".lstrip(": "))
    try:
        return conv(value)
    except ValueError as e:
        raise ConfigError(f"{where}: bad value for {key}: {e}".lstrip(": ")) from None


def load_config(path) -> Dict[str, object]:
    return parse_config_text(Path(path).read_text(), str(path))


@dataclass
class RunConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    trace_path: Optional[str] = None
    workload: SyntheticWorkloadSpec = field(default_factory=SyntheticWorkloadSpec)
    seed: int = 1
    label: Optional[str] = None
    report_path: Optional[str] = None
    calibration_path: Optional[str] = None
    compare_path: Optional[str] = None

    @property
    def name(self) -> str:
        return self.label or Variant(self.sim.variant).value

    def trace_source(self) -> Tuple:
        if self.trace_path is not None:
            return ("file", str(Path(self.trace_path).resolve()))
        return ("synthetic", self.workload)

    def load_records(self) -> List:
        if self.trace_path is not None:
            return list(load_trace(self.trace_path))
        return generate_synthetic(self.workload)


def build(values: Dict[str, object]) -> RunConfig:
    """Turn parsed key/values into a :class:`RunConfig`."""
    v = dict(values)
    try:
        variant = Variant(v.get("variant", Variant.CHEIP.value))
    except ValueError:
        names = ", ".join(x.value for x in Variant)
        raise ConfigError(f"unknown variant {v.get('variant')!r} (expected one of {names})") from None

    d = CacheConfig()

    def level(prefix: str, base: LevelConfig) -> LevelConfig:
        return LevelConfig(
            int(v.get(f"{prefix}.size_kb", base.size_bytes // 1024)) * 1024,
            int(v.get(f"{prefix}.ways", base.ways)),
            int(v.get(f"{prefix}.latency", base.latency_cycles)),
        )

    cache = CacheConfig(
        l1i=level("l1i", d.l1i),
        l2=level("l2", d.l2),
        l3=level("l3", d.l3),
        dram_latency_cycles=int(v.get("dram.latency", d.dram_latency_cycles)),
        prefetch_bandwidth_tokens_per_kcycle=int(v.get("prefetch.tokens_per_kcycle", d.prefetch_bandwidth_tokens_per_kcycle)),
        next_line=bool(v.get("prefetch.next_line", True)),
    )
    try:
        cache.validate()
    except ValueError as e:
        raise ConfigError(str(e)) from None

    seed = int(v.get("seed", 1))
    c = ControllerConfig()
    ctrl = ControllerConfig(
        lr=float(v.get("ctrl.lr", c.lr)),
        epsilon=float(v.get("ctrl.epsilon", c.epsilon)),
        period=int(v.get("ctrl.period", c.period)),
        horizon=int(v.get("ctrl.horizon", c.horizon)),
        shadow=bool(v.get("ctrl.shadow", c.shadow)),
        lambda_useless=float(v.get("ctrl.lambda_useless", c.lambda_useless)),
        lambda_evict=float(v.get("ctrl.lambda_evict", c.lambda_evict)),
        seed=seed,
    )
    if not 0.0 <= ctrl.epsilon <= 1.0 or ctrl.lr <= 0 or ctrl.period <= 0 or ctrl.horizon <= 0:
        raise ConfigError("controller settings out of range")

    sets = int(v.get("eip.sets", 128))
    if sets <= 0 or sets & (sets - 1):
        raise ConfigError("eip.sets must be a positive power of two")
    sim = SimConfig(
        variant=variant,
        cache=cache,
        table_sets=sets,
        table_ways=int(v.get("eip.ways", 16)),
        trigger_confidence=int(v.get("eip.trigger_confidence", 1)),
        attach=bool(v.get("cheip.attach", True)),
        controller=ctrl,
        warmup_instructions=int(v.get("warmup_instructions", 0)),
    )
    if sim.warmup_instructions < 0:
        raise ConfigError("warmup_instructions must be non-negative")

    wl = {k.split(".", 1)[1]: val for k, val in v.items() if k.startswith("workload.")}
    wl.setdefault("seed", seed)
    if "seed" in v:
        wl["seed"] = seed
    workload = SyntheticWorkloadSpec(**wl)

    return RunConfig(
        sim=sim,
        trace_path=v.get("trace.path"),
        workload=workload,
        seed=seed,
        label=v.get("label"),
        report_path=v.get("out.report"),
        calibration_path=v.get("out.calibration"),
        compare_path=v.get("out.compare"),
    )


def parse_overrides(args: Iterable[str]) -> Dict[str, object]:
    """``--key value`` / ``--key=value`` pairs for any known config key."""
    out: Dict[str, object] = {}
    items = list(args)
    i = 0
    while i < len(items):
        tok = items[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(items):
                raise ConfigError(f"missing value for --{key}")
            val = items[i + 1]
            i += 2
        out[key] = coerce(key, val)
    return out
