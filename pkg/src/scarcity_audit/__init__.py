"""Receipt-rate disparities under hierarchical and weighted prioritization."""

from importlib import resources

from .errors import DomainError, ParseError, UsageError, ValidationError
from .metrics import (
    DEFAULT_EPS,
    DisparityPoint,
    SweepSeries,
    absolute_difference,
    disparity_point,
    hier_dAD_dB,
    hier_dG_dB,
    hier_dlnRD_dB,
    hier_lowbudget_limits,
    log_ratio_difference,
    receipt_rate,
    receipt_rates,
    sweep,
    weighted_dAD_dB,
    weighted_lnRD,
)
from .oracle import EmpiricalRates, TrialConfig, exact_small_instance, finite_difference, simulate
from .policy import (
    AllocationOutcome,
    HierarchicalPolicy,
    WeightedPolicy,
    allocate,
    cutoff_category,
    hierarchical_allocate,
    load_policy,
    read_policy,
    saturation_thresholds,
    tension_report,
    weighted_allocate,
)
from .population import PopulationTable, load_population, read_population, table_stats

__version__ = "0.1.0"


def data_path(name: str):
    """Path to a bundled data file, e.g. ``data_path("shelter_synthetic.csv")``."""
    return resources.files(__name__).joinpath("data", name)


def shelter_example():
    """Synthetic two-category shelter population plus both example policies.

    Returns ``(table, hierarchical_policy, weighted_policy)``. The counts are
    invented: families and single adults, split by refugee status.
    """
    table = read_population(data_path("shelter_synthetic.csv"))
    return (
        table,
        read_policy(data_path("shelter_hierarchical.json")),
        read_policy(data_path("shelter_weighted.json")),
    )
