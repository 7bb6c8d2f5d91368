import io
import json

import numpy as np
import pytest
from conftest import random_instance
from hypothesis import given, settings
from hypothesis import strategies as st

from scarcity_audit import (
    HierarchicalPolicy,
    PopulationTable,
    WeightedPolicy,
    allocate,
    cutoff_category,
    hierarchical_allocate,
    load_policy,
    saturation_thresholds,
    tension_report,
    weighted_allocate,
)
from scarcity_audit.errors import DomainError, ValidationError
from scarcity_audit.oracle import population_partial_fd
from scarcity_audit.policy import (
    breakpoints,
    inter_partial,
    policy_to_dict,
    ranking_from_ranks,
    weighted_probabilities,
)


def sizes_table(*sizes):
    names = tuple(f"C{i + 1}" for i in range(len(sizes)))
    return PopulationTable(names, ("s1",), np.array(sizes).reshape(-1, 1))


def ranked(table):
    return HierarchicalPolicy(table.categories)


# -- hierarchical -------------------------------------------------------------


@pytest.mark.parametrize(
    "sizes, budget, probs, unspent",
    [
        ((10,), 10, [1.0], 0.0),
        ((4, 6), 0, [0.0, 0.0], 0.0),
        ((4, 6), 7, [1.0, 0.5], 0.0),
        ((5, 10, 5), 8, [1.0, 0.3, 0.0], 0.0),
        ((4, 6), 12, [1.0, 1.0], 2.0),
    ],
)
def test_hierarchical_examples(sizes, budget, probs, unspent):
    t = sizes_table(*sizes)
    out = hierarchical_allocate(t, ranked(t), budget)
    np.testing.assert_allclose(out.probabilities, probs, rtol=0, atol=1e-15)
    assert out.unspent == unspent


def test_ranking_order_not_declaration_order():
    t = sizes_table(4, 6)
    out = hierarchical_allocate(t, HierarchicalPolicy(("C2", "C1")), 7)
    assert out.probabilities.tolist() == [0.25, 1.0]
    assert out.cutoff == "C1"


@pytest.mark.parametrize("budget, expected", [(7, "C2"), (4, None), (11, None), (0, None), (10, None), (2, "C1")])
def test_cutoff_category(budget, expected):
    t = sizes_table(4, 6)
    assert cutoff_category(t, ranked(t), budget) == expected


def test_boundary_gives_full_service_not_cutoff():
    t = sizes_table(4, 6)
    out = hierarchical_allocate(t, ranked(t), 4.0)
    assert out.status == ("fully_served", "unserved")
    assert out.probabilities.tolist() == [1.0, 0.0]


def test_duplicate_ranking_rejected():
    with pytest.raises(ValidationError, match="merge"):
        HierarchicalPolicy(("C1", "C1"))
    with pytest.raises(ValidationError, match="collapse"):
        ranking_from_ranks({"C1": 1, "C2": 1})
    assert ranking_from_ranks({"C1": 2, "C2": 1}).ranking == ("C2", "C1")


def test_ranking_must_cover_table(toy):
    with pytest.raises(ValidationError):
        hierarchical_allocate(toy, HierarchicalPolicy(("C1",)), 3)
    with pytest.raises(ValidationError):
        hierarchical_allocate(toy, HierarchicalPolicy(("C1", "C2", "C3")), 3)


def test_negative_budget_rejected(toy, hier):
    with pytest.raises(ValidationError):
        allocate(toy, hier, -1)
    with pytest.raises(ValidationError):
        allocate(toy, hier, float("nan"))


# -- weighted -----------------------------------------------------------------


def test_weighted_cap_examples():
    # one category of 10 receiving 8 units, then one of 4 receiving 8 units
    assert weighted_probabilities(np.array([10]), np.array([1.0]), 8.0).tolist() == [0.8]
    t = sizes_table(4)
    out = weighted_allocate(t, WeightedPolicy({"C1": 1.0}), 8)
    assert out.probabilities.tolist() == [1.0]
    assert out.unspent == 4.0
    assert out.status == ("saturated",)


def test_weighted_toy(toy, weighted):
    out = weighted_allocate(toy, weighted, 5)
    np.testing.assert_allclose(out.resources, [3.5, 1.5], rtol=1e-15)
    np.testing.assert_allclose(out.probabilities, [0.875, 0.25], rtol=1e-15)
    assert out.unspent == 0.0
    assert weighted_allocate(toy, weighted, 0).probabilities.tolist() == [0.0, 0.0]


def test_weighted_saturation_thresholds(toy, weighted):
    sat = saturation_thresholds(toy, weighted)
    assert list(sat) == ["C1", "C2"]
    np.testing.assert_allclose(list(sat.values()), [40 / 7, 20.0], rtol=1e-15)
    assert list(saturation_thresholds(sizes_table(10), WeightedPolicy({"C1": 1})).values()) == [10.0]
    eq = saturation_thresholds(sizes_table(5, 5), WeightedPolicy({"C1": 1, "C2": 1}))
    assert list(eq.items()) == [("C1", 10.0), ("C2", 10.0)]


def test_thresholds_sorted_ascending():
    t = sizes_table(10, 1)
    sat = saturation_thresholds(t, WeightedPolicy({"C1": 1, "C2": 1}))
    assert list(sat) == ["C2", "C1"]


def test_weighted_exactly_at_threshold_is_saturated():
    t = sizes_table(5, 5)
    out = weighted_allocate(t, WeightedPolicy({"C1": 1, "C2": 1}), 10)
    assert out.probabilities.tolist() == [1.0, 1.0]
    assert out.status == ("saturated", "saturated")
    assert out.unspent == 0.0


@pytest.mark.parametrize("weights", [{"C1": 0, "C2": 1}, {"C1": -1, "C2": 1}, {"C1": float("inf"), "C2": 1}])
def test_bad_weights(weights):
    with pytest.raises(ValidationError):
        WeightedPolicy(weights)


def test_weights_must_cover_table(toy):
    with pytest.raises(ValidationError):
        weighted_allocate(toy, WeightedPolicy({"C1": 1.0}), 3)


# -- policy files -------------------------------------------------------------


def test_policy_files_roundtrip(hier, weighted):
    for policy in (hier, weighted):
        text = json.dumps(policy_to_dict(policy))
        assert load_policy(io.StringIO(text)) == policy


@pytest.mark.parametrize(
    "text",
    [
        '{"kind":"lottery"}',
        '{"kind":"hierarchical"}',
        '{"kind":"weighted","weights":[1,2]}',
        "not json",
        "[]",
    ],
)
def test_bad_policy_files(text):
    with pytest.raises(ValidationError):
        load_policy(io.StringIO(text))


# -- invariants ---------------------------------------------------------------


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), b=st.floats(0, 1.5))
def test_hierarchical_invariants(seed, b):
    table, hier, _ = random_instance(np.random.default_rng(seed))
    budget = b * table.total
    out = hierarchical_allocate(table, hier, budget)
    sizes = table.category_sizes
    assert np.all((out.probabilities >= 0) & (out.probabilities <= 1))
    served = float(np.sum(out.probabilities * sizes))
    assert served == pytest.approx(min(budget, table.total), rel=1e-15 * len(sizes), abs=1e-12)
    ranked_p = out.probabilities[hier.order(table)]
    assert np.all(np.diff(ranked_p) <= 0)
    assert sum(s == "cutoff" for s in out.status) <= 1
    later = hierarchical_allocate(table, hier, budget + 0.37)
    assert np.all(later.probabilities >= out.probabilities)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), b=st.floats(0, 3), scale=st.floats(1e-3, 1e3))
def test_weighted_invariants(seed, b, scale):
    table, _, weighted = random_instance(np.random.default_rng(seed))
    budget = b * table.total
    out = weighted_allocate(table, weighted, budget)
    sizes = table.category_sizes
    p = out.probabilities
    assert np.all((p >= 0) & (p <= 1))
    sat = weighted.vector(table).sum() / weighted.vector(table) * sizes
    assert np.array_equal(p == 1.0, budget >= sat)
    spent = float(np.sum(np.minimum(out.resources, sizes)))
    assert spent + out.unspent == pytest.approx(budget, rel=1e-9, abs=1e-12)
    np.testing.assert_allclose(p, np.minimum(1.0, out.resources / sizes), rtol=1e-15)

    scaled = WeightedPolicy({c: w * scale for c, w in weighted.weights.items()})
    other = weighted_allocate(table, scaled, budget)
    np.testing.assert_allclose(other.resources, out.resources, rtol=1e-12)
    np.testing.assert_allclose(other.probabilities, out.probabilities, rtol=1e-12)


def test_breakpoints(toy, hier, weighted):
    assert breakpoints(toy, hier).tolist() == [4.0, 10.0]
    np.testing.assert_allclose(breakpoints(toy, weighted), [40 / 7, 20.0])


# -- tension ------------------------------------------------------------------


def test_hierarchical_tension_example():
    t = sizes_table(4, 6)
    rep = tension_report(t, ranked(t), 7)
    assert list(rep) == ["C2"]
    c2 = rep["C2"]
    assert c2.first == pytest.approx(-3 / 36, rel=1e-15)
    assert c2.second == pytest.approx(6 / 216, rel=1e-15)
    assert c2.inter == {"C1": -1 / 6}
    assert c2.first < 0 < c2.second and c2.inter["C1"] < 0


def test_weighted_tension_example(toy, weighted):
    rep = tension_report(toy, weighted, 5)
    assert rep["C2"].first == pytest.approx(-0.3 * 5 / 36, rel=1e-15)
    assert rep["C2"].first == pytest.approx(-0.0416667, abs=1e-7)
    assert rep["C2"].second > 0
    assert set(rep) == {"C1", "C2"}


def test_tension_refuses_inapplicable_category():
    t = sizes_table(4, 6)
    with pytest.raises(DomainError, match="C1"):
        tension_report(t, ranked(t), 7, categories=["C1"])
    with pytest.raises(DomainError, match="C2"):
        tension_report(t, ranked(t), 4, categories=["C2"])
    toy_w = WeightedPolicy({"C1": 0.7, "C2": 0.3})
    with pytest.raises(DomainError, match="C1"):
        tension_report(t, toy_w, 6, categories=["C1"])


def test_tension_empty_on_boundary():
    t = sizes_table(4, 6)
    assert tension_report(t, ranked(t), 4) == {}


def test_higher_ranked_unaffected_by_lower_sizes():
    t = sizes_table(4, 6)
    assert inter_partial(t, ranked(t), 7, "C1", "C2") == 0.0
    assert population_partial_fd(t, ranked(t), 7, "C1", wrt="C2") == 0.0
    assert inter_partial(t, ranked(t), 7, "C2", "C1") == -1 / 6


def test_weighted_categories_independent(toy, weighted):
    assert inter_partial(toy, weighted, 5, "C1", "C2") == 0.0
    assert population_partial_fd(toy, weighted, 5, "C1", wrt="C2") == 0.0


def _close(analytic, fd):
    return abs(fd - analytic) <= 1e-6 * abs(analytic)


def test_tension_matches_finite_differences(rng):
    checked = 0
    for _ in range(200):
        table, hier, weighted = random_instance(rng)
        for policy in (hier, weighted):
            budget = float(rng.uniform(0, table.total))
            for cat, tn in tension_report(table, policy, budget).items():
                # stencil must stay in the same case of the closed form
                n = table.category_sizes[table.category_index(cat)]
                h = 1e-4 * max(1, n)
                if isinstance(policy, HierarchicalPolicy):
                    pos = list(policy.ranking).index(cat)
                    before = sum(table.category_sizes[table.category_index(c)] for c in policy.ranking[:pos])
                    if not before < budget < before + n - h:
                        continue
                else:
                    w = policy.vector(table)
                    if budget >= (n - h) * w.sum() / w[table.category_index(cat)]:
                        continue
                assert _close(tn.first, population_partial_fd(table, policy, budget, cat))
                assert _close(tn.second, population_partial_fd(table, policy, budget, cat, order=2))
                for other, val in tn.inter.items():
                    fd = population_partial_fd(table, policy, budget, cat, wrt=other)
                    assert fd == pytest.approx(val, rel=1e-6, abs=1e-12)
                checked += 1
    assert checked > 100
