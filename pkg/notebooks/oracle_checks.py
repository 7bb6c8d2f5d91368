"""
Checking the closed forms by brute force
========================================

Three independent routes to the same numbers: a seeded lottery run many
times, a per-person sum in exact fractions, and finite differences.
"""

import scarcity_audit as sa
from scarcity_audit.oracle import exact_rates, precise_slope, segment_around

table = sa.PopulationTable.from_records([
    ("C1", "s1", 3), ("C1", "s2", 1),
    ("C2", "s1", 2), ("C2", "s2", 4),
])
ranked = sa.HierarchicalPolicy(("C1", "C2"))
weighted = sa.WeightedPolicy({"C1": 0.7, "C2": 0.3})

###############################################################################
# Lottery
# -------
#
# Each trial serves actual people. The cutoff category draws ``floor(r)``
# winners plus one more with probability ``frac(r)``.

for policy, b in [(ranked, 7), (weighted, 5)]:
    est = sa.simulate(table, policy, b, sa.TrialConfig(100_000, seed=42))
    truth = sa.receipt_rates(table, sa.allocate(table, policy, b))
    for s in est.subgroups:
        z = (est.rate(s) - truth[s]) / est.se(s)
        print(f"{policy.kind:<12} B={b}  {s}: {est.rate(s):.5f} vs {truth[s]:.5f}  z={z:+.2f}")

###############################################################################
# Exact fractions
# ---------------

print(exact_rates(table, ranked, 7))
print(sa.exact_small_instance(table, weighted, 5))

###############################################################################
# Finite differences
# ------------------
#
# In floating point, and in exact arithmetic for the log ratio where
# rounding would otherwise swamp a flat slope.


def g1(b):
    return sa.disparity_point(table, ranked, b, "s1", "s2").rates["s1"]


print("dG/dB:", sa.hier_dG_dB(table, ranked, 7, "s1"),
      sa.finite_difference(g1, 7, segment=segment_around(table, ranked, 7)))
print("d lnRD/dB:", sa.hier_dlnRD_dB(table, ranked, 7, "s1", "s2")[0],
      precise_slope(table, ranked, 7, "s1", "s2", "lnRD"))
