"""Walk one compressed entry through a handful of updates and print how the
8-line window moves."""

from slofetch import compressed as cmp

source = 0x2_0000_1000  # line address
entry = None

# destinations seen after this source, in arrival order
arrivals = [0x2_0000_1040, 0x2_0000_1041, 0x2_0000_1044, 0x2_0000_1049, 0x2_0000_1041, 0x2_0000_1047]

for d in arrivals:
    entry = cmp.update(entry, source, d)
    base = cmp.decode(entry, source)
    row = "".join(str(c) if c else "." for c in entry.conf)
    kept = "kept" if entry.covers(source, d) else "dropped"
    print(f"dest {d:#x} ({kept:7})  window {base:#x}..{base + 7:#x}  conf [{row}]  word {entry.pack():#011x}")

# the same entry asked for prefetch targets at each window size
for limit in (4, 8, 12):
    print(limit, [hex(t) for t in cmp.targets(entry, source, threshold=1, window_limit=limit)])

# a destination from a different 2^20-line region cannot be encoded at all
far = source + (1 << 21)
print("far destination representable:", cmp.representable(source, far))
