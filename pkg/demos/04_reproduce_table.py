"""
Reproducing the m = 4 comparison table
======================================

Run every scenario row through the classical rules with 12,500 report
matrices each (50,000 per-bit decisions) and compare with the published
per-bit error rates.
"""
from byzfuse import bench

report = bench.reproduce_table("table1", samples=12_500, seed=0, rules=("maj", "hardis", "softis", "opt"))

print(f"{'row':<12s}" + "".join(f"{r:>9s}" for r in ("maj", "hardis", "softis", "opt")))
cells = {(r.label, r.rule): r.per_bit_error for r in report.rows}
for row in dict.fromkeys(r.label for r in report.rows):
    print(f"{row:<12s}" + "".join(f"{cells[(row, rule)]:9.4f}" for rule in ("maj", "hardis", "softis", "opt")))

print()
for a in report.anchors:
    print(a.describe())
print("ordering holds in", sum(o.passed for o in report.orderings), "of", len(report.orderings), "comparisons")
