"""Shadow mode first: the controller scores every trigger and logs what it
would have fetched, while the cache only sees next-line traffic. Then the
same controller is allowed to issue."""

from slofetch.controller import ControllerConfig
from slofetch.sim import SimConfig, Variant, simulate
from slofetch.trace import SyntheticWorkloadSpec, generate_synthetic

trace = generate_synthetic(SyntheticWorkloadSpec(seed=5, record_count=80_000))

shadow_cfg = SimConfig(variant=Variant.CHEIP_CTRL, controller=ControllerConfig(shadow=True, period=20_000))
shadow = simulate(trace, shadow_cfg)
plain = simulate(trace, shadow_cfg.replace(variant=Variant.NEXT_LINE))
print("prefetch fills, shadow vs next-line only:", shadow.prefetch_fills, plain.prefetch_fills)

lines = shadow.calibration_csv.splitlines()
print(len(lines) - 1, "logged decisions; first few:")
for line in lines[:6]:
    print("  ", line)

live = simulate(trace, shadow_cfg.replace(controller=ControllerConfig(period=20_000)))
r = live.report
print(f"live: issued {r.issued}, accuracy {r.accuracy:.3f}, MPKI {r.mpki:.2f} (next-line only {plain.report.mpki:.2f})")
