import numpy as np
import pytest

from scarcity_audit import HierarchicalPolicy, PopulationTable, WeightedPolicy


def toy_table():
    # n = [4, 6], N_s1 = N_s2 = 5
    return PopulationTable.from_records(
        [("C1", "s1", 3), ("C1", "s2", 1), ("C2", "s1", 2), ("C2", "s2", 4)]
    )


@pytest.fixture
def toy():
    return toy_table()


@pytest.fixture
def hier():
    return HierarchicalPolicy(("C1", "C2"))


@pytest.fixture
def weighted():
    return WeightedPolicy({"C1": 0.7, "C2": 0.3})


def random_instance(rng, max_k=5, max_s=4, max_count=20):
    """Random table plus one policy of each kind.

    Every category and every subgroup gets at least one member.
    """
    k = int(rng.integers(1, max_k + 1))
    s = int(rng.integers(2, max_s + 1))
    counts = rng.integers(0, max_count + 1, size=(k, s))
    for i in range(k):
        if counts[i].sum() == 0:
            counts[i, rng.integers(s)] = 1
    for j in range(s):
        if counts[:, j].sum() == 0:
            counts[rng.integers(k), j] = 1
    table = PopulationTable(
        tuple(f"C{i}" for i in range(k)), tuple(f"s{j}" for j in range(s)), counts
    )
    ranking = tuple(table.categories[i] for i in rng.permutation(k))
    weights = {c: float(rng.uniform(0.05, 1.0)) for c in table.categories}
    return table, HierarchicalPolicy(ranking), WeightedPolicy(weights)


@pytest.fixture
def rng():
    return np.random.default_rng(20241016)


# -- acceptance reporting -----------------------------------------------------

_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records one acceptance line and returns ``ok``."""

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[n])
