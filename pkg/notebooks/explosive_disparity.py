"""
When the log ratio blows up
===========================

Under a strict ranking, a subgroup that is nearly absent from the top
category gets almost nothing until the budget reaches the next category.
Right after that point its receipt rate starts from close to zero, and the
log ratio of the two rates moves fast. A weighted rule spreads the budget,
so the ratio barely moves.
"""

import numpy as np

import scarcity_audit as sa

table = sa.PopulationTable.from_records([
    ("C1", "s1", 90), ("C1", "s2", 1),
    ("C2", "s1", 10), ("C2", "s2", 99),
])
ranked = sa.HierarchicalPolicy(("C1", "C2"))
weighted = sa.WeightedPolicy({"C1": 0.7, "C2": 0.3})

###############################################################################
# Slopes along the budget
# -----------------------

for b in [20, 60, 90, 91.01, 91.1, 92, 100, 150]:
    value, mag = sa.hier_dlnRD_dB(table, ranked, b, "s1", "s2")
    g = sa.receipt_rates(table, sa.allocate(table, ranked, b))
    print(f"B={b:7.2f}  G_s2={g['s2']:.4f}  d lnRD/dB={value:+.5f}")

# inside the top category both rates grow in proportion, so the ratio is fixed
rd_low, _ = sa.hier_lowbudget_limits(table, ranked, "s1", "s2")
print("ratio while only C1 is served:", rd_low)

###############################################################################
# The weighted rule over the same range
# -------------------------------------

first = min(sa.saturation_thresholds(table, weighted).values())
budgets = np.linspace(0.01 * first, 92.1, 400)
ln_w = [sa.weighted_lnRD(table, weighted, b, "s1", "s2") for b in budgets]
print(f"weighted lnRD spread on [{budgets[0]:.2f}, {budgets[-1]:.2f}]: {max(ln_w) - min(ln_w):.2e}")

from scarcity_audit.metrics import scan_log_ratio

h = scan_log_ratio(table, ranked, "s1", "s2", budgets[0], budgets[-1], 2001)
w = scan_log_ratio(table, weighted, "s1", "s2", budgets[0], budgets[-1], 2001)
print(f"largest |d lnRD/dB|: ranked {h.max_slope:.4f} at B={h.argmax:.3f}, weighted {w.max_slope:.2e}")

###############################################################################
# The gap itself
# --------------
#
# AD moves linearly within a segment. Its slope only depends on how each
# subgroup is represented in the category being filled.

for b in [45.5, 95, 150]:
    print(f"B={b:6.1f}  dAD/dB ranked={sa.hier_dAD_dB(table, ranked, b, 's1', 's2'):+.5f}  "
          f"weighted={sa.weighted_dAD_dB(table, weighted, b, 's1', 's2'):+.5f}")
