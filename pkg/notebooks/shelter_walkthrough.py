"""
Shelter beds under two prioritization rules
===========================================

A walk through the bundled synthetic shelter population: families and
single adults, each split by refugee status. The counts are invented, so
read the shapes, not the exact numbers.

Run with ``python notebooks/shelter_walkthrough.py``.
"""

import numpy as np

import scarcity_audit as sa

table, hierarchical, weighted = sa.shelter_example()
stats = sa.table_stats(table)
print("people:", stats.total)
print("category sizes:", stats.category_sizes)
print("subgroup sizes:", stats.subgroup_sizes)

# Families first, then single adults
print("ranking:", hierarchical.ranking)
print("weights:", weighted.weights)

###############################################################################
# One budget
# ----------
#
# 468 beds cover a small fraction of the population. Under the ranking all of
# them go to families; under the weights both categories get a share.

budget = 468
for policy in (hierarchical, weighted):
    out = sa.allocate(table, policy, budget)
    rates = sa.receipt_rates(table, out)
    print(policy.kind)
    for rec in out.records():
        print(f"  {rec['category']:<14} P={rec['probability']:.4f}  {rec['status']}")
    for s, g in rates.items():
        print(f"  G[{s}] = {g:.4f}")
    pt = sa.disparity_point(table, policy, budget, "refugee", "non_refugee")
    print(f"  refugees are {100 * (pt.rd - 1):.0f}% more likely to get a bed (lnRD {pt.lnrd:.3f})")

###############################################################################
# Saturation
# ----------
#
# A weighted category stops absorbing beds once its share covers everyone in
# it. Leftover beds are not handed to anyone else.

for cat, b in sa.saturation_thresholds(table, weighted).items():
    print(f"{cat} saturates at B = {b:.1f}")
print("unspent at B = N:", sa.allocate(table, weighted, table.total).unspent)

###############################################################################
# Sweeping the budget
# -------------------
#
# The hierarchical rates climb to 1 at B = N. The weighted rates level off
# because single adults never saturate within N.

pair = ("refugee", "non_refugee")
grid = (0.0, float(table.total), 41)
h = sa.sweep(table, hierarchical, pair, grid)
w = sa.sweep(table, weighted, pair, grid)

print(f"{'B':>8} {'hier G_ref':>10} {'hier G_non':>10} {'hier lnRD':>10} "
      f"{'wt G_ref':>9} {'wt G_non':>9} {'wt lnRD':>8}")
for i in range(0, len(h), 4):
    j = int(np.searchsorted(w.budgets, h.budgets[i]))
    print(f"{h.budgets[i]:8.1f} {h.g1[i]:10.4f} {h.g2[i]:10.4f} {h.lnrd[i]:10.4f} "
          f"{w.g1[j]:9.4f} {w.g2[j]:9.4f} {w.lnrd[j]:8.4f}")

print("hierarchical breakpoints:", h.breakpoints)
print("weighted thresholds:", w.breakpoints)

###############################################################################
# Plot-ready output
# -----------------
#
# ``SweepSeries.to_csv`` gives one row per budget. The same file comes out of
# the command line::
#
#     scarcity-audit sweep --population my_counts.csv \
#         --policy my_policy.json --pair refugee,non_refugee --out series.csv
#
# To re-run this walkthrough on real counts, write them as
# ``category,subgroup,count`` rows and point ``--population`` at the file.

print(h.to_csv().splitlines()[0])
