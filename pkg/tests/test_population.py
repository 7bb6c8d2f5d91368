import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scarcity_audit import PopulationTable, load_population, table_stats
from scarcity_audit.errors import DomainError, ParseError, ValidationError


def load(text):
    return load_population(io.StringIO(text))


TOY_CSV = "category,subgroup,count\nC1,s1,3\nC1,s2,1\nC2,s1,2\nC2,s2,4\n"


def test_load_toy():
    t = load(TOY_CSV)
    assert t.categories == ("C1", "C2")
    assert t.subgroups == ("s1", "s2")
    assert t.category_sizes.tolist() == [4, 6]
    assert t.total == 10
    assert t.subgroup_sizes.tolist() == [5, 5]


def test_stats():
    stats = table_stats(load(TOY_CSV))
    assert stats.total == 10
    assert stats.n_categories == 2
    assert stats.category_sizes == {"C1": 4, "C2": 6}
    assert stats.subgroup_sizes == {"s1": 5, "s2": 5}


def test_stats_single_cell():
    stats = table_stats(load("category,subgroup,count\nC1,s1,7\n"))
    assert (stats.total, stats.n_categories) == (7, 1)


def test_stats_three_categories():
    t = PopulationTable(("A", "B", "C"), ("x",), np.array([[5], [10], [5]]))
    assert table_stats(t).total == 20


def test_negative_count_rejected():
    with pytest.raises(ValidationError, match="negative"):
        load("category,subgroup,count\nC1,s1,-2\n")


def test_non_integer_count_rejected():
    with pytest.raises(ValidationError, match="line 2"):
        load("category,subgroup,count\nC1,s1,2.5\n")


def test_empty_category_rejected():
    with pytest.raises(ValidationError, match="empty"):
        load("category,subgroup,count\nC1,s1,0\nC1,s2,0\n")


def test_zero_cell_allowed():
    t = load("category,subgroup,count\nC1,s1,0\nC1,s2,3\nC2,s1,1\n")
    assert t.counts.tolist() == [[0, 3], [1, 0]]


def test_duplicate_pair_rejected():
    with pytest.raises(ValidationError, match="duplicate"):
        load("category,subgroup,count\nC1,s1,1\nC1,s1,2\n")


@pytest.mark.parametrize(
    "text, line",
    [
        ("category,subgroup,count\nC1,s1\n", 2),
        ("category,subgroup,count\nC1,s1,1\nC1,s2,abc\n", 3),
        ("category,subgroup,count\nC1,,1\n", 2),
        ("cat,sub,n\nC1,s1,1\n", 1),
        ("", 1),
    ],
)
def test_parse_errors_carry_line(text, line):
    with pytest.raises(ParseError) as err:
        load(text)
    assert err.value.line == line


def test_quoted_labels():
    t = load('category,subgroup,count\n"Families, large",s1,2\n')
    assert t.categories == ("Families, large",)


def test_table_is_immutable(toy):
    with pytest.raises(ValueError):
        toy.counts[0, 0] = 9


def test_empty_subgroup_metric_refused():
    t = PopulationTable(("C1",), ("s1", "s2"), np.array([[3, 0]]))
    with pytest.raises(DomainError):
        t.subgroup_column("s2")
    with pytest.raises(KeyError):
        t.subgroup_column("nope")


def test_roundtrip_csv(toy):
    assert load(toy.to_csv()) == toy


counts_strategy = st.lists(
    st.lists(st.integers(0, 50), min_size=3, max_size=3), min_size=1, max_size=5
).filter(lambda rows: all(sum(r) > 0 for r in rows))


@given(counts_strategy)
def test_sums_exact_and_loading_deterministic(rows):
    t = PopulationTable(
        tuple(f"C{i}" for i in range(len(rows))), ("a", "b", "c"), np.array(rows)
    )
    assert t.category_sizes.tolist() == [sum(r) for r in rows]
    assert t.total == sum(map(sum, rows))
    assert int(t.subgroup_sizes.sum()) == t.total
    text = t.to_csv()
    again = load(text)
    assert again == t and again.categories == t.categories and again.subgroups == t.subgroups
