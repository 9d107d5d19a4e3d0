"""Run every prefetcher on one synthetic trace and print the comparison table.
Takes roughly ten seconds."""

import dataclasses

from slofetch.metrics import compare, comparison_csv
from slofetch.sim import SimConfig, Variant, simulate, storage_bytes
from slofetch.trace import SyntheticWorkloadSpec, generate_synthetic

trace = generate_synthetic(SyntheticWorkloadSpec(seed=1))
warmup = 20_000

base = simulate(trace, SimConfig(variant=Variant.NEXT_LINE, warmup_instructions=warmup)).report
reports, sizes = [], []
for v in Variant:
    cfg = SimConfig(variant=v, warmup_instructions=warmup)
    reports.append(simulate(trace, cfg).report)
    sizes.append(storage_bytes(cfg))

# same mechanism, entries kept only in the table (no L1 attachment)
cfg = SimConfig(variant=Variant.CHEIP, attach=False, warmup_instructions=warmup)
reports.append(dataclasses.replace(simulate(trace, cfg).report, variant="CHEIP(table only)"))
sizes.append(storage_bytes(cfg))

rows = compare(base, reports)
for row, size in zip(rows, sizes):
    row.extra["storage_bytes"] = size
print(comparison_csv(rows, extra_columns=("storage_bytes",)))
