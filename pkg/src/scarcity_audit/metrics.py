"""Subgroup receipt rates, disparity metrics and their budget derivatives.

For a subgroup ``s`` the receipt rate is the expected share of its members
who get a unit::

    G_s(B) = sum_i n[i, s] * P_i(B) / N_s

Two subgroups are compared through the absolute gap ``AD = |G_1 - G_2|``
and the smoothed log ratio ``lnRD = ln((G_1 + eps) / (G_2 + eps))``.

Every rate is piecewise linear in ``B``. The slopes change at the rank-order
prefix sums (hierarchical) or the saturation thresholds (weighted), and the
analytic derivatives here refuse to answer exactly on those budgets.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._parallel import ordered_map
from .errors import DomainError, SignUndefined, UndefinedAtBreakpoint, UsageError
from .policy import (
    FULLY_SERVED,
    AllocationOutcome,
    HierarchicalPolicy,
    Policy,
    WeightedPolicy,
    allocate,
    breakpoints,
    check_budget,
    saturation_thresholds,
    weighted_thresholds,
)
from .population import PopulationTable

DEFAULT_EPS = 1e-9

FLAG_OK = "ok"
FLAG_BREAKPOINT = "breakpoint"
FLAG_EPS = "eps_dominated"


def receipt_rate(table: PopulationTable, outcome: AllocationOutcome, subgroup: str) -> float:
    col = table.subgroup_column(subgroup)
    return float(col @ outcome.probabilities / col.sum())


def receipt_rates(table: PopulationTable, outcome: AllocationOutcome) -> dict[str, float]:
    """Rates for every non-empty subgroup."""
    return {
        s: receipt_rate(table, outcome, s)
        for s, n in zip(table.subgroups, table.subgroup_sizes)
        if n > 0
    }


def absolute_difference(g1: float, g2: float) -> float:
    return abs(g1 - g2)


def log_ratio_difference(g1: float, g2: float, eps: float = DEFAULT_EPS) -> tuple[float, float]:
    """``(RD, lnRD)``.

    lnRD is taken as a difference of logs so that swapping the pair negates
    it exactly.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    rd = (g1 + eps) / (g2 + eps)
    return rd, math.log(g1 + eps) - math.log(g2 + eps)


@dataclass(frozen=True)
class DisparityPoint:
    budget: float
    rates: dict[str, float]
    ad: float
    rd: float
    lnrd: float
    eps: float
    eps_dominated: bool


def disparity_point(
    table: PopulationTable,
    policy: Policy,
    budget: float,
    s1: str,
    s2: str,
    eps: float = DEFAULT_EPS,
) -> DisparityPoint:
    outcome = allocate(table, policy, budget)
    g1 = receipt_rate(table, outcome, s1)
    g2 = receipt_rate(table, outcome, s2)
    rd, lnrd = log_ratio_difference(g1, g2, eps)
    return DisparityPoint(
        budget=outcome.budget,
        rates={s1: g1, s2: g2},
        ad=absolute_difference(g1, g2),
        rd=rd,
        lnrd=lnrd,
        eps=eps,
        eps_dominated=g2 == 0.0,
    )


def _rates(table, policy, budget, s1, s2):
    outcome = allocate(table, policy, budget)
    return receipt_rate(table, outcome, s1), receipt_rate(table, outcome, s2)


def _sign(g1: float, g2: float) -> float:
    if g1 == g2:
        raise SignUndefined("sign undefined: the two receipt rates are equal")
    return 1.0 if g1 > g2 else -1.0


# -- hierarchical derivatives -------------------------------------------------
#
# Inside a segment every rate is linear, G_s = (F_s + a_s * B) / N_s, so
# d1 * G2 - d2 * G1 loses its B-dependence. The gap and log-ratio slopes are
# evaluated in that form, with integer numerators where possible: the
# textbook form d1/(G1+eps) - d2/(G2+eps) cancels catastrophically wherever
# lnRD is flat.


def _cutoff(table: PopulationTable, policy: HierarchicalPolicy, budget: float):
    outcome = allocate(table, policy, budget)
    if outcome.cutoff is None:
        raise UndefinedAtBreakpoint(
            f"derivative undefined at breakpoint or outside interior (budget {outcome.budget})"
        )
    full = np.array([st == FULLY_SERVED for st in outcome.status])
    return outcome, table.category_index(outcome.cutoff), full


def hier_dG_dB(table: PopulationTable, policy: HierarchicalPolicy, budget: float, subgroup: str) -> float:
    _, m, _ = _cutoff(table, policy, budget)
    col = table.subgroup_column(subgroup)
    return float(col[m]) / (float(col.sum()) * float(table.category_sizes[m]))


def _pair_counts(table, s1, s2):
    c1 = table.subgroup_column(s1)
    c2 = table.subgroup_column(s2)
    return c1, c2, int(c1.sum()), int(c2.sum())


def hier_dAD_dB(table: PopulationTable, policy: HierarchicalPolicy, budget: float, s1: str, s2: str) -> float:
    outcome, m, _ = _cutoff(table, policy, budget)
    c1, c2, N1, N2 = _pair_counts(table, s1, s2)
    n_m = int(table.category_sizes[m])
    sign = _sign(receipt_rate(table, outcome, s1), receipt_rate(table, outcome, s2))
    return sign * (int(c1[m]) * N2 - int(c2[m]) * N1) / (N1 * N2 * n_m)


def hier_dlnRD_dB(
    table: PopulationTable,
    policy: HierarchicalPolicy,
    budget: float,
    s1: str,
    s2: str,
    eps: float = DEFAULT_EPS,
) -> tuple[float, float]:
    """``(d lnRD/dB, |d lnRD/dB|)`` inside a cutoff segment."""
    outcome, m, full = _cutoff(table, policy, budget)
    c1, c2, N1, N2 = _pair_counts(table, s1, s2)
    n_m = int(table.category_sizes[m])
    g1 = receipt_rate(table, outcome, s1)
    g2 = receipt_rate(table, outcome, s2)
    f1, f2 = int(c1[full].sum()), int(c2[full].sum())
    cross = int(c1[m]) * f2 - int(c2[m]) * f1
    diff = int(c1[m]) * N2 - int(c2[m]) * N1
    value = (cross + eps * diff) / (N1 * N2 * n_m * (g1 + eps) * (g2 + eps))
    return value, abs(value)


def hier_lowbudget_limits(
    table: PopulationTable, policy: HierarchicalPolicy, s1: str, s2: str
) -> tuple[float, float]:
    """RD while only the top category is being served, and RD at B = N.

    While the budget is inside the top-ranked category both rates grow in
    proportion to B, so their ratio is constant.
    """
    top = int(policy.order(table)[0])
    c1 = table.subgroup_column(s1)
    c2 = table.subgroup_column(s2)
    if c2[top] == 0:
        raise DomainError(
            f"limit assumes positive denominator rate: {s2!r} is absent "
            f"from the top-ranked category {table.categories[top]!r}"
        )
    rd_low = (float(c2.sum()) / float(c1.sum())) * (float(c1[top]) / float(c2[top]))
    return rd_low, 1.0


# -- weighted derivatives -----------------------------------------------------


def _unsaturated(table: PopulationTable, policy: WeightedPolicy, budget: float) -> np.ndarray:
    budget = check_budget(budget)
    sat = weighted_thresholds(table.category_sizes, policy.vector(table))
    if np.any(sat == budget):
        raise UndefinedAtBreakpoint(
            f"derivative undefined at breakpoint: budget {budget} is a saturation threshold"
        )
    return budget < sat


def weighted_dG_dB(table: PopulationTable, policy: WeightedPolicy, budget: float, subgroup: str) -> float:
    active = _unsaturated(table, policy, budget)
    col = table.subgroup_column(subgroup).astype(float)
    per_unit = policy.shares(table) * col / table.category_sizes
    return float(per_unit[active].sum() / col.sum())


def weighted_dAD_dB(table: PopulationTable, policy: WeightedPolicy, budget: float, s1: str, s2: str) -> float:
    active = _unsaturated(table, policy, budget)
    if not active.any():
        # everyone served, AD is identically 0 on this segment
        return 0.0
    c1, c2, N1, N2 = _pair_counts(table, s1, s2)
    n = table.category_sizes
    terms = policy.shares(table) * (c1 * N2 - c2 * N1) / n
    sign = _sign(*_rates(table, policy, budget, s1, s2))
    return sign * float(terms[active].sum()) / (N1 * N2)


def weighted_dlnRD_dB(
    table: PopulationTable,
    policy: WeightedPolicy,
    budget: float,
    s1: str,
    s2: str,
    eps: float = DEFAULT_EPS,
) -> tuple[float, float]:
    active = _unsaturated(table, policy, budget)
    c1, c2, N1, N2 = _pair_counts(table, s1, s2)
    f1, f2 = int(c1[~active].sum()), int(c2[~active].sum())
    per_unit = policy.shares(table)[active] / table.category_sizes[active]
    cross = float(np.sum(per_unit * (c1[active] * f2 - c2[active] * f1)))
    diff = float(np.sum(per_unit * (c1[active] * N2 - c2[active] * N1)))
    g1, g2 = _rates(table, policy, budget, s1, s2)
    value = (cross + eps * diff) / (N1 * N2 * (g1 + eps) * (g2 + eps))
    return value, abs(value)


def weighted_lnRD(
    table: PopulationTable,
    policy: WeightedPolicy,
    budget: float,
    s1: str,
    s2: str,
    eps: float = DEFAULT_EPS,
) -> float:
    return log_ratio_difference(*_rates(table, policy, budget, s1, s2), eps)[1]


def dAD_dB(table, policy, budget, s1, s2) -> float:
    if isinstance(policy, HierarchicalPolicy):
        return hier_dAD_dB(table, policy, budget, s1, s2)
    return weighted_dAD_dB(table, policy, budget, s1, s2)


def dlnRD_dB(table, policy, budget, s1, s2, eps=DEFAULT_EPS) -> float:
    if isinstance(policy, HierarchicalPolicy):
        return hier_dlnRD_dB(table, policy, budget, s1, s2, eps)[0]
    return weighted_dlnRD_dB(table, policy, budget, s1, s2, eps)[0]


def dG_dB(table, policy, budget, subgroup) -> float:
    if isinstance(policy, HierarchicalPolicy):
        return hier_dG_dB(table, policy, budget, subgroup)
    return weighted_dG_dB(table, policy, budget, subgroup)


# -- sweeps ---------------------------------------------------------------


def parse_grid(text: str) -> tuple[float, float, int]:
    """``"lo:hi:points"`` -> ``(lo, hi, points)``."""
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"grid must look like lo:hi:points, got {text!r}")
    try:
        lo, hi, pts = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise UsageError(f"grid must look like lo:hi:points, got {text!r}") from None
    return lo, hi, pts


def build_grid(lo: float, hi: float, points: int, extra=()) -> np.ndarray:
    """Uniform grid on ``[lo, hi]`` plus every value of ``extra`` inside it.

    Duplicates are dropped by exact comparison.
    """
    if points < 2:
        raise UsageError(f"grid needs at least 2 points, got {points}")
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo < 0 or hi <= lo:
        raise UsageError(f"grid range must satisfy 0 <= lo < hi, got {lo}:{hi}")
    base = np.linspace(lo, hi, points)
    extra = np.asarray(extra, dtype=float)
    extra = extra[(extra >= lo) & (extra <= hi)]
    return np.unique(np.concatenate([base, extra]))


@dataclass(frozen=True, eq=False)
class SweepSeries:
    """Disparity metrics for one subgroup pair over a budget grid.

    ``dAD`` and ``dlnRD`` hold the analytic slopes, NaN where undefined.
    """

    kind: str
    pair: tuple[str, str]
    eps: float
    budgets: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    ad: np.ndarray
    rd: np.ndarray
    lnrd: np.ndarray
    flags: tuple[str, ...]
    dAD: np.ndarray
    dlnRD: np.ndarray
    breakpoints: np.ndarray
    thresholds: dict[str, float] = field(default_factory=dict)

    def __len__(self):
        return len(self.budgets)

    def to_csv(self) -> str:
        s1, s2 = self.pair
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["B", f"G_{s1}", f"G_{s2}", "AD", "RD", "lnRD", "flag"])
        for row in zip(self.budgets, self.g1, self.g2, self.ad, self.rd, self.lnrd, self.flags):
            writer.writerow([f"{v:.9f}" for v in row[:-1]] + [row[-1]])
        return buf.getvalue()

    def to_dict(self) -> dict:
        s1, s2 = self.pair

        def col(a):
            return [None if math.isnan(v) else float(v) for v in a]

        return {
            "kind": self.kind,
            "pair": [s1, s2],
            "epsilon": self.eps,
            "B": col(self.budgets),
            f"G_{s1}": col(self.g1),
            f"G_{s2}": col(self.g2),
            "AD": col(self.ad),
            "RD": col(self.rd),
            "lnRD": col(self.lnrd),
            "flag": list(self.flags),
            "dAD_dB": col(self.dAD),
            "dlnRD_dB": col(self.dlnRD),
            "breakpoints": col(self.breakpoints),
            "thresholds": dict(self.thresholds),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False)


def _or_nan(fn, *args) -> float:
    try:
        return float(fn(*args))
    except DomainError:
        return math.nan


def sweep(
    table: PopulationTable,
    policy: Policy,
    pair: tuple[str, str],
    grid: tuple[float, float, int] | None = None,
    eps: float = DEFAULT_EPS,
) -> SweepSeries:
    """Evaluate the pair's metrics over ``grid`` (default ``0:N:201``)."""
    s1, s2 = pair
    table.subgroup_column(s1)
    table.subgroup_column(s2)
    lo, hi, points = grid if grid is not None else (0.0, float(table.total), 201)
    bps = breakpoints(table, policy)
    budgets = build_grid(lo, hi, points, bps)
    bp_set = set(bps.tolist())

    def one(b):
        pt = disparity_point(table, policy, b, s1, s2, eps)
        if b in bp_set:
            slopes = (math.nan, math.nan)
        else:
            slopes = (
                _or_nan(dAD_dB, table, policy, b, s1, s2),
                _or_nan(dlnRD_dB, table, policy, b, s1, s2, eps),
            )
        return pt, slopes

    results = ordered_map(one, budgets.tolist())
    pts = [p for p, _ in results]
    flags = tuple(
        FLAG_EPS if p.eps_dominated else FLAG_BREAKPOINT if p.budget in bp_set else FLAG_OK
        for p in pts
    )
    return SweepSeries(
        kind=policy.kind,
        pair=(s1, s2),
        eps=eps,
        budgets=budgets,
        g1=np.array([p.rates[s1] for p in pts]),
        g2=np.array([p.rates[s2] for p in pts]),
        ad=np.array([p.ad for p in pts]),
        rd=np.array([p.rd for p in pts]),
        lnrd=np.array([p.lnrd for p in pts]),
        flags=flags,
        dAD=np.array([s[0] for _, s in results]),
        dlnRD=np.array([s[1] for _, s in results]),
        breakpoints=bps,
        thresholds=saturation_thresholds(table, policy) if isinstance(policy, WeightedPolicy) else {},
    )


@dataclass(frozen=True)
class LogRatioScan:
    """Summary of lnRD and its slope over a budget range, breakpoints skipped."""

    lo: float
    hi: float
    max_slope: float
    argmax: float
    lnrd_min: float
    lnrd_max: float
    points: int

    @property
    def spread(self) -> float:
        return self.lnrd_max - self.lnrd_min


def scan_log_ratio(
    table: PopulationTable,
    policy: Policy,
    s1: str,
    s2: str,
    lo: float,
    hi: float,
    points: int = 201,
    eps: float = DEFAULT_EPS,
) -> LogRatioScan:
    """Largest ``|d lnRD/dB|`` and the lnRD range over ``[lo, hi]``."""
    budgets = build_grid(lo, hi, points)
    bp_set = set(breakpoints(table, policy).tolist())
    best, arg = -1.0, math.nan
    values = []
    for b in budgets:
        values.append(disparity_point(table, policy, b, s1, s2, eps).lnrd)
        if b in bp_set:
            continue
        slope = _or_nan(dlnRD_dB, table, policy, b, s1, s2, eps)
        if not math.isnan(slope) and abs(slope) > best:
            best, arg = abs(slope), float(b)
    return LogRatioScan(
        lo=float(lo),
        hi=float(hi),
        max_slope=best if best >= 0 else math.nan,
        argmax=arg,
        lnrd_min=min(values),
        lnrd_max=max(values),
        points=len(budgets),
    )
