"""How tightly do miss destinations cluster? Sweep the generator's layout
scatter and watch the 8-line window coverage fall."""

from slofetch.trace import SyntheticWorkloadSpec, cluster_stats, generate_synthetic

print("scatter  delta20  window8  hist(4,8,12,16)")
for scatter in (0.0, 0.1, 0.3, 0.6):
    spec = SyntheticWorkloadSpec(seed=2, record_count=60_000, layout_scatter=scatter)
    st = cluster_stats(generate_synthetic(spec))
    hist = [st.per_window_histogram[w] for w in (4, 8, 12, 16)]
    print(f"{scatter:7.2f}  {st.delta20_fraction:7.3f}  {st.window8_fraction:7.3f}  {hist}")
