"""On-chip metadata for the compressed hierarchy at both table sizes, next to
the full-address entangling table it replaces."""

from slofetch.hierarchy import budget
from slofetch.sim import SimConfig, Variant, storage_bytes

for entries in (2048, 4096):
    b = budget(entries)
    print(f"{entries} table entries: history {b.history_bytes} B, attached {b.attached_bytes} B, "
          f"table {b.table_bytes} B, total {b.total_bytes} B ({b.total_bytes / 1024:.2f} KB)")

# without the per-line slots only the history and the table remain
print("table only:", budget(2048, l1_lines=0).total_bytes, "B")

for v in Variant:
    print(f"{v.value:18} {storage_bytes(SimConfig(variant=v)):8d} B")
