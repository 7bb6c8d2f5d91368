"""Hierarchical and weighted allocation of a fixed budget across categories.

Both engines return per-category probabilities that an individual receives
one unit. Budgets are real numbers; one unit serves one person.

Hierarchical: categories are served whole in rank order. The category in
which the budget runs out (the cutoff category) gets the leftover spread
evenly over its members; everyone below gets nothing.

Weighted: category ``i`` receives ``w_i / sum(w) * B`` units. A category
whose share exceeds its size is capped at probability 1 and the excess is
left unspent (no reallocation).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, TextIO, Union

import numpy as np

from .errors import DomainError, ValidationError
from .population import PopulationTable

FULLY_SERVED = "fully_served"
CUTOFF = "cutoff"
UNSERVED = "unserved"
SATURATED = "saturated"
UNSATURATED = "unsaturated"


@dataclass(frozen=True)
class HierarchicalPolicy:
    """Strict ranking, highest priority first."""

    ranking: tuple[str, ...]
    kind = "hierarchical"

    def __post_init__(self):
        ranking = tuple(self.ranking)
        dupes = sorted({c for c in ranking if ranking.count(c) > 1})
        if dupes:
            raise ValidationError(
                f"categories ranked more than once: {dupes}; "
                "merge equal-rank categories into one before ranking"
            )
        object.__setattr__(self, "ranking", ranking)

    def order(self, table: PopulationTable) -> np.ndarray:
        """Declaration-order indices of the table's categories, in rank order."""
        if set(self.ranking) != set(table.categories):
            missing = [c for c in table.categories if c not in self.ranking]
            extra = [c for c in self.ranking if c not in table.categories]
            raise ValidationError(
                f"ranking must list every category exactly once "
                f"(missing: {missing}, unknown: {extra})"
            )
        return np.array([table.category_index(c) for c in self.ranking], dtype=np.intp)


@dataclass(frozen=True)
class WeightedPolicy:
    """Positive weight per category; only the normalised weights matter."""

    weights: Mapping[str, float] = field(hash=False)
    kind = "weighted"

    def __post_init__(self):
        weights = dict(self.weights)
        for cat, w in weights.items():
            if not isinstance(w, (int, float)) or isinstance(w, bool):
                raise ValidationError(f"weight for {cat!r} must be a number")
            if not math.isfinite(w) or w <= 0:
                raise ValidationError(f"weight for {cat!r} must be positive, got {w}")
        object.__setattr__(self, "weights", weights)

    def vector(self, table: PopulationTable) -> np.ndarray:
        """Raw weights in declaration order."""
        if set(self.weights) != set(table.categories):
            missing = [c for c in table.categories if c not in self.weights]
            extra = [c for c in self.weights if c not in table.categories]
            raise ValidationError(
                f"weights must cover every category (missing: {missing}, unknown: {extra})"
            )
        return np.array([float(self.weights[c]) for c in table.categories])

    def shares(self, table: PopulationTable) -> np.ndarray:
        w = self.vector(table)
        return w / w.sum()


Policy = Union[HierarchicalPolicy, WeightedPolicy]


def ranking_from_ranks(ranks: Mapping[str, int]) -> HierarchicalPolicy:
    """Build a ranking from ``{category: rank}`` with 1 as the top rank.

    Equal ranks are rejected: the model has no notion of ties, so tied
    categories have to be merged into a single category in the population
    table first.
    """
    by_rank: dict[int, list[str]] = {}
    for cat, r in ranks.items():
        by_rank.setdefault(r, []).append(cat)
    tied = {r: cats for r, cats in by_rank.items() if len(cats) > 1}
    if tied:
        r, cats = min(tied.items())
        raise ValidationError(
            f"categories {cats} share rank {r}; collapse them into one category"
        )
    return HierarchicalPolicy(tuple(sorted(ranks, key=ranks.__getitem__)))


def policy_from_dict(doc: Mapping) -> Policy:
    kind = doc.get("kind")
    if kind == "hierarchical":
        ranking = doc.get("ranking")
        if not isinstance(ranking, list) or not all(isinstance(c, str) for c in ranking):
            raise ValidationError("hierarchical policy needs a list of category labels")
        return HierarchicalPolicy(tuple(ranking))
    if kind == "weighted":
        weights = doc.get("weights")
        if not isinstance(weights, dict):
            raise ValidationError("weighted policy needs a weights object")
        return WeightedPolicy(weights)
    raise ValidationError(f"unknown policy kind {kind!r}")


def load_policy(source: TextIO) -> Policy:
    try:
        doc = json.load(source)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"policy is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ValidationError("policy must be a JSON object")
    return policy_from_dict(doc)


def read_policy(path: str | Path) -> Policy:
    with open(path, encoding="utf-8") as fh:
        return load_policy(fh)


def policy_to_dict(policy: Policy) -> dict:
    if isinstance(policy, HierarchicalPolicy):
        return {"kind": "hierarchical", "ranking": list(policy.ranking)}
    return {"kind": "weighted", "weights": dict(policy.weights)}


def check_budget(budget: float) -> float:
    b = float(budget)
    if not math.isfinite(b) or b < 0:
        raise ValidationError(f"budget must be a finite non-negative number, got {budget}")
    return b


# -- closed forms on real-valued sizes ---------------------------------------
#
# These accept fractional sizes so that population partials can be checked
# by finite differences. The allocate functions feed them integer sizes.


def hierarchical_probabilities(sizes_ranked, budget: float) -> np.ndarray:
    """Per-category probability for sizes listed in rank order."""
    n = np.asarray(sizes_ranked)
    through = np.cumsum(n)
    before = through - n
    return np.where(
        through <= budget,
        1.0,
        np.where(before < budget, (budget - before) / n, 0.0),
    )


def weighted_thresholds(sizes, weights) -> np.ndarray:
    """Smallest budget at which each category's share covers all its members."""
    w = np.asarray(weights, dtype=float)
    return np.asarray(sizes) * w.sum() / w


def weighted_probabilities(sizes, weights, budget: float) -> np.ndarray:
    # B / B_sat is < 1 in floating point whenever B < B_sat, so status and
    # probability can never disagree at the threshold.
    sat = weighted_thresholds(sizes, weights)
    return np.where(budget >= sat, 1.0, budget / sat)


def probabilities_for_sizes(policy: Policy, table: PopulationTable, sizes, budget: float) -> np.ndarray:
    """Closed-form probabilities with the category sizes replaced by ``sizes``.

    ``sizes`` is in declaration order and may be fractional.
    """
    sizes = np.asarray(sizes, dtype=float)
    if isinstance(policy, HierarchicalPolicy):
        order = policy.order(table)
        out = np.empty(len(sizes))
        out[order] = hierarchical_probabilities(sizes[order], budget)
        return out
    return weighted_probabilities(sizes, policy.vector(table), budget)


# -- allocation outcomes ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AllocationOutcome:
    """Result of running one policy at one budget.

    Arrays are in the table's category declaration order. For hierarchical
    runs ``resources`` is what each category actually consumes; for weighted
    runs it is the raw share, which can exceed the category size.
    """

    kind: str
    budget: float
    categories: tuple[str, ...]
    sizes: np.ndarray
    probabilities: np.ndarray
    resources: np.ndarray
    status: tuple[str, ...]
    unspent: float
    cutoff: str | None = None

    def probability(self, category: str) -> float:
        return float(self.probabilities[self.categories.index(category)])

    def records(self) -> list[dict]:
        return [
            {
                "category": c,
                "size": int(n),
                "probability": float(p),
                "expected_resources": float(r),
                "status": st,
            }
            for c, n, p, r, st in zip(
                self.categories, self.sizes, self.probabilities, self.resources, self.status
            )
        ]


def hierarchical_allocate(
    table: PopulationTable, policy: HierarchicalPolicy, budget: float
) -> AllocationOutcome:
    # Extension point: subgroup weighting inside the cutoff category would
    # replace the single per-category probability below.
    budget = check_budget(budget)
    order = policy.order(table)
    sizes = table.category_sizes
    ranked = sizes[order]
    through = np.cumsum(ranked)
    before = through - ranked

    prob = np.zeros(len(sizes))
    prob[order] = hierarchical_probabilities(ranked, budget)
    status = [UNSERVED] * len(sizes)
    cutoff = None
    for pos, idx in enumerate(order):
        if through[pos] <= budget:
            status[idx] = FULLY_SERVED
        elif before[pos] < budget:
            status[idx] = CUTOFF
            cutoff = table.categories[idx]
    total = int(through[-1])
    return AllocationOutcome(
        kind=policy.kind,
        budget=budget,
        categories=table.categories,
        sizes=sizes,
        probabilities=prob,
        resources=prob * sizes,
        status=tuple(status),
        unspent=max(0.0, budget - total),
        cutoff=cutoff,
    )


def cutoff_category(table: PopulationTable, policy: HierarchicalPolicy, budget: float) -> str | None:
    """Category only partly served at ``budget``, or None on a boundary."""
    return hierarchical_allocate(table, policy, budget).cutoff


def weighted_allocate(table: PopulationTable, policy: WeightedPolicy, budget: float) -> AllocationOutcome:
    budget = check_budget(budget)
    sizes = table.category_sizes
    w = policy.vector(table)
    shares = w / w.sum() * budget
    sat = weighted_thresholds(sizes, w)
    saturated = budget >= sat
    prob = weighted_probabilities(sizes, w, budget)
    unspent = float(np.sum(np.where(saturated, np.maximum(shares - sizes, 0.0), 0.0)))
    return AllocationOutcome(
        kind=policy.kind,
        budget=budget,
        categories=table.categories,
        sizes=sizes,
        probabilities=prob,
        resources=shares,
        status=tuple(SATURATED if s else UNSATURATED for s in saturated),
        unspent=unspent,
    )


def allocate(table: PopulationTable, policy: Policy, budget: float) -> AllocationOutcome:
    if isinstance(policy, HierarchicalPolicy):
        return hierarchical_allocate(table, policy, budget)
    if isinstance(policy, WeightedPolicy):
        return weighted_allocate(table, policy, budget)
    raise TypeError(f"not a policy: {policy!r}")


def saturation_thresholds(table: PopulationTable, policy: WeightedPolicy) -> dict[str, float]:
    """``{category: B_sat}`` sorted ascending; ties keep declaration order."""
    sat = weighted_thresholds(table.category_sizes, policy.vector(table))
    order = np.argsort(sat, kind="stable")
    return {table.categories[i]: float(sat[i]) for i in order}


def breakpoints(table: PopulationTable, policy: Policy) -> np.ndarray:
    """Budgets where the probabilities change slope, ascending and unique.

    Rank-order prefix sums for hierarchical, saturation thresholds for weighted.
    """
    if isinstance(policy, HierarchicalPolicy):
        pts = np.cumsum(table.category_sizes[policy.order(table)]).astype(float)
    else:
        pts = np.array(list(saturation_thresholds(table, policy).values()))
    return np.unique(pts)


# -- population sensitivities -------------------------------------------------


@dataclass(frozen=True)
class Tension:
    """Sensitivity of one category's probability to population sizes.

    ``first`` and ``second`` are the first and second partials with respect
    to the category's own size; ``inter`` maps every other category to the
    partial with respect to that category's size.
    """

    category: str
    first: float
    second: float
    inter: dict[str, float]


def _hier_position(table, policy, budget, category):
    order = policy.order(table)
    idx = table.category_index(category)
    pos = int(np.nonzero(order == idx)[0][0])
    ranked = table.category_sizes[order]
    before = int(ranked[:pos].sum())
    return order, pos, before, int(ranked[pos])


def inter_partial(
    table: PopulationTable, policy: Policy, budget: float, category: str, wrt: str
) -> float:
    """Partial of ``category``'s probability with respect to the size of ``wrt``.

    Under weighted allocation categories do not interact, so this is 0. Under
    hierarchical allocation only a cutoff category reacts, and only to
    higher-ranked sizes. On a case boundary the partial is one-sided and a
    DomainError is raised.
    """
    budget = check_budget(budget)
    if category == wrt:
        raise ValueError("use tension_report for a category's own size")
    table.category_index(wrt)
    if isinstance(policy, WeightedPolicy):
        table.category_index(category)
        return 0.0
    order, pos, before, size = _hier_position(table, policy, budget, category)
    wrt_pos = int(np.nonzero(order == table.category_index(wrt))[0][0])
    through = before + size
    if before < budget < through:
        return -1.0 / size if wrt_pos < pos else 0.0
    if through < budget or budget < before or wrt_pos > pos:
        return 0.0
    raise DomainError(
        f"partial of {category!r} with respect to {wrt!r} is undefined: "
        f"budget {budget} sits on a case boundary"
    )


def _hier_tension(table, policy, budget, category) -> Tension:
    order, pos, before, size = _hier_position(table, policy, budget, category)
    if not before < budget < before + size:
        raise DomainError(
            f"category {category!r} is not the cutoff category at budget {budget}; "
            "its own-size partials are undefined"
        )
    left = budget - before
    inter = {}
    for p, idx in enumerate(order):
        if p != pos:
            inter[table.categories[idx]] = -1.0 / size if p < pos else 0.0
    return Tension(category, -left / size**2, 2.0 * left / size**3, inter)


def _weighted_tension(table, policy, budget, category) -> Tension:
    i = table.category_index(category)
    n = float(table.category_sizes[i])
    w = policy.vector(table)
    if budget >= weighted_thresholds(table.category_sizes, w)[i]:
        raise DomainError(
            f"category {category!r} is saturated at budget {budget}; "
            "its own-size partials are undefined"
        )
    scale = w[i] / w.sum() * budget
    inter = {c: 0.0 for c in table.categories if c != category}
    return Tension(category, -scale / n**2, 2.0 * scale / n**3, inter)


def tension_report(
    table: PopulationTable,
    policy: Policy,
    budget: float,
    categories: list[str] | None = None,
) -> dict[str, Tension]:
    """Own-size and cross-size partials of the allocation probabilities.

    Without ``categories`` the report covers every category where the
    own-size partial exists: the cutoff category (hierarchical) or each
    unsaturated category (weighted). Naming a category where it does not
    exist raises DomainError.
    """
    budget = check_budget(budget)
    one = _hier_tension if isinstance(policy, HierarchicalPolicy) else _weighted_tension
    if categories is not None:
        return {c: one(table, policy, budget, c) for c in categories}
    report = {}
    for c in table.categories:
        try:
            report[c] = one(table, policy, budget, c)
        except DomainError:
            continue
    return report
