"""Hamming-distance predicates: sequence lengths and measured broker cost.

Run:  python3 demos/hamming_scaling.py
"""
from gpmatch import bench

rows = bench.bench_hamming(16, use_table_depths=True)
print(bench.format_rows(rows))
ns, dev = bench.linear_fit(rows + bench.bench_hamming(8, use_table_depths=False))
far = ns * 1e-9 * bench.ofsgp_length(16, 16)
print(f"\n~{ns:.0f} ns per element (spread {dev:.0%}); n=16 at d=16 would need ~{far / 3600:.1f} h per match")
