"""Brute-force checks for the closed-form rates and derivatives.

Three independent routes:

* :func:`simulate` runs the allocation as an actual lottery over
  individuals, many times, and averages who got served.
* :func:`exact_small_instance` adds up each person's probability with
  exact rational arithmetic.
* :func:`finite_difference` and :func:`population_partial_fd` estimate
  slopes numerically.

Random numbers come from Philox-4x32-10 keyed on the seed and indexed by
``(slot, stream, trial)``, so trial ``t`` draws the same numbers no matter
how trials are split across chunks or threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from decimal import Decimal, localcontext
from fractions import Fraction
from typing import Callable

import numpy as np

from ._parallel import ordered_map, worker_count
from .errors import DomainError, UndefinedAtBreakpoint, UsageError
from .policy import (
    HierarchicalPolicy,
    Policy,
    WeightedPolicy,
    breakpoints,
    check_budget,
    probabilities_for_sizes,
)
from .population import PopulationTable

_M32 = np.uint64(0xFFFFFFFF)
_MUL0 = np.uint64(0xD2511F53)
_MUL1 = np.uint64(0xCD9E8D57)
_BUMP0 = 0x9E3779B9
_BUMP1 = 0xBB67AE85

STREAM_PERSON = 0
STREAM_EXTRA = 1

# cap on uniforms generated per chunk, bounds memory for large categories
_CHUNK_CELLS = 1 << 21


def philox4x32(counter, key: tuple[int, int], rounds: int = 10):
    """Vectorised Philox-4x32 block function.

    ``counter`` is a sequence of four equal-shape integer arrays (each word
    < 2**32); returns four ``uint64`` arrays holding 32-bit outputs.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & _M32 for c in counter)
    k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
    for r in range(rounds):
        if r:
            k0 = (k0 + _BUMP0) & 0xFFFFFFFF
            k1 = (k1 + _BUMP1) & 0xFFFFFFFF
        p0 = _MUL0 * c0
        p1 = _MUL1 * c2
        c0, c1, c2, c3 = (
            (p1 >> np.uint64(32)) ^ c1 ^ np.uint64(k0),
            p1 & _M32,
            (p0 >> np.uint64(32)) ^ c3 ^ np.uint64(k1),
            p0 & _M32,
        )
    return c0, c1, c2, c3


def seed_key(seed: int) -> tuple[int, int]:
    if not 0 <= seed < 2**64:
        raise UsageError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed & 0xFFFFFFFF, seed >> 32


def uniforms(seed: int, slots, stream: int, trials) -> np.ndarray:
    """53-bit uniforms in [0, 1), shape ``(len(trials), len(slots))``."""
    key = seed_key(seed)
    t = np.asarray(trials, dtype=np.uint64)[:, None]
    s = np.asarray(slots, dtype=np.uint64)[None, :]
    t, s = np.broadcast_arrays(t, s)
    x0, x1, _, _ = philox4x32(
        (s, np.full(s.shape, stream, dtype=np.uint64), t & _M32, t >> np.uint64(32)), key
    )
    hi = (x0 >> np.uint64(5)).astype(np.float64)
    lo = (x1 >> np.uint64(6)).astype(np.float64)
    return (hi * 67108864.0 + lo) / 9007199254740992.0


@dataclass(frozen=True)
class TrialConfig:
    trials: int
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.trials, (int, np.integer)) or self.trials < 1:
            raise UsageError(f"trials must be a positive integer, got {self.trials}")
        seed_key(self.seed)


@dataclass(frozen=True, eq=False)
class EmpiricalRates:
    """Monte Carlo estimates of the subgroup receipt rates.

    ``served_mean``/``served_stderr`` are per category, in declaration order.
    Standard errors use the sample standard deviation over trials; with a
    single trial they are reported as 0.
    """

    subgroups: tuple[str, ...]
    mean: np.ndarray
    stderr: np.ndarray
    trials: int
    seed: int
    categories: tuple[str, ...]
    served_mean: np.ndarray
    served_stderr: np.ndarray

    def rate(self, subgroup: str) -> float:
        return float(self.mean[self.subgroups.index(subgroup)])

    def se(self, subgroup: str) -> float:
        return float(self.stderr[self.subgroups.index(subgroup)])

    def records(self) -> list[dict]:
        return [
            {
                "subgroup": s,
                "mean": float(m),
                "stderr": float(e),
                "trials": self.trials,
                "seed": self.seed,
            }
            for s, m, e in zip(self.subgroups, self.mean, self.stderr)
        ]

    def to_json(self) -> str:
        return json.dumps(self.records(), indent=2)


def _served_amounts(table: PopulationTable, policy: Policy, budget: float) -> np.ndarray:
    """Expected number served per category, by walking the allocation process."""
    sizes = [int(n) for n in table.category_sizes]
    served = np.zeros(len(sizes))
    if isinstance(policy, HierarchicalPolicy):
        left = budget
        for idx in policy.order(table):
            take = min(left, sizes[idx])
            served[idx] = take
            left -= take
    else:
        w = policy.vector(table)
        total = w.sum()
        for i, n in enumerate(sizes):
            served[i] = min(w[i] * budget / total, n)
    return served


def _stderr(x: np.ndarray) -> np.ndarray:
    if x.shape[0] < 2:
        return np.zeros(x.shape[1:])
    return x.std(axis=0, ddof=1) / math.sqrt(x.shape[0])


def simulate(
    table: PopulationTable, policy: Policy, budget: float, config: TrialConfig
) -> EmpiricalRates:
    """Run the allocation as a person-level lottery ``config.trials`` times.

    In each trial a category that can be served ``r`` units (``0 < r < n``)
    draws a uniform random key per member and serves the ``floor(r)``
    members with the smallest keys, plus the next one with probability
    ``frac(r)``. Categories with ``r = n`` are served entirely.
    """
    budget = check_budget(budget)
    if not isinstance(config, TrialConfig):
        raise TypeError("config must be a TrialConfig")
    counts = table.counts
    sizes = counts.sum(axis=1)
    n_sub = counts.shape[1]
    amounts = _served_amounts(table, policy, budget)

    fixed = np.zeros(n_sub)
    lotteries = []
    offset = 0
    for i, n in enumerate(sizes):
        n = int(n)
        r = float(amounts[i])
        if r >= n:
            fixed += counts[i]
        elif r > 0:
            k = math.floor(r)
            members = np.repeat(np.arange(n_sub), counts[i])
            onehot = np.zeros((n, n_sub))
            onehot[np.arange(n), members] = 1.0
            lotteries.append((i, offset, n, k, r - k, onehot))
        offset += n

    widest = max((lot[2] for lot in lotteries), default=1)
    chunk = max(1, min(config.trials, _CHUNK_CELLS // widest))
    starts = list(range(0, config.trials, chunk))
    totals = counts.sum(axis=0).astype(float)
    safe_totals = np.where(totals > 0, totals, 1.0)

    def run(start):
        trials = np.arange(start, min(start + chunk, config.trials))
        got = np.broadcast_to(fixed, (len(trials), n_sub)).copy()
        per_cat = np.tile(np.minimum(amounts, sizes).astype(float), (len(trials), 1))
        if lotteries:
            extra_u = uniforms(config.seed, [lot[0] for lot in lotteries], STREAM_EXTRA, trials)
        for j, (i, off, n, k, frac, onehot) in enumerate(lotteries):
            take = k + (extra_u[:, j] < frac)
            keys = uniforms(config.seed, np.arange(off, off + n), STREAM_PERSON, trials)
            rank = np.argsort(np.argsort(keys, axis=1, kind="stable"), axis=1, kind="stable")
            chosen = rank < take[:, None]
            got += chosen @ onehot
            per_cat[:, i] = take
        return got / safe_totals, per_cat

    parts = ordered_map(run, starts, worker_count())
    rates = np.concatenate([p[0] for p in parts])
    served = np.concatenate([p[1] for p in parts])
    keep = totals > 0
    return EmpiricalRates(
        subgroups=tuple(s for s, k in zip(table.subgroups, keep) if k),
        mean=rates.mean(axis=0)[keep],
        stderr=_stderr(rates)[keep],
        trials=config.trials,
        seed=config.seed,
        categories=table.categories,
        served_mean=served.mean(axis=0),
        served_stderr=_stderr(served),
    )


def _exact_probabilities(table: PopulationTable, policy: Policy, budget) -> list[Fraction]:
    """Per-category probability in exact rationals, by walking the process."""
    b = budget if isinstance(budget, Fraction) else Fraction(check_budget(budget))
    if b < 0:
        raise DomainError(f"negative budget {b}")
    sizes = [int(n) for n in table.category_sizes]
    prob = [Fraction(0)] * len(sizes)
    if isinstance(policy, HierarchicalPolicy):
        left = b
        for idx in policy.order(table):
            n = sizes[idx]
            prob[idx] = Fraction(1) if left >= n else left / n
            left = max(Fraction(0), left - n)
    else:
        w = [Fraction(float(x)) for x in policy.vector(table)]
        total_w = sum(w)
        for i, n in enumerate(sizes):
            share = w[i] * b / total_w
            prob[i] = Fraction(1) if share >= n else share / n
    return prob


def exact_rates(table: PopulationTable, policy: Policy, budget) -> dict[str, Fraction]:
    """Receipt rates as exact fractions; ``budget`` may itself be a Fraction."""
    prob = _exact_probabilities(table, policy, budget)
    out = {}
    for s_idx, s in enumerate(table.subgroups):
        col = [int(c) for c in table.counts[:, s_idx]]
        if sum(col):
            out[s] = sum((c * p for c, p in zip(col, prob)), Fraction(0)) / sum(col)
    return out


def exact_small_instance(
    table: PopulationTable, policy: Policy, budget: float, limit: int = 10_000
) -> dict[str, float]:
    """Receipt rates from each person's exact rational serving probability."""
    if table.total > limit:
        raise UsageError(f"population of {table.total} exceeds the exact-path guard of {limit}")
    prob = _exact_probabilities(table, policy, budget)
    served = {s: Fraction(0) for s in table.subgroups}
    members = {s: 0 for s in table.subgroups}
    for i, _ in enumerate(table.categories):
        for s_idx, s in enumerate(table.subgroups):
            for _person in range(int(table.counts[i, s_idx])):
                served[s] += prob[i]
                members[s] += 1
    return {s: float(served[s] / members[s]) for s in table.subgroups if members[s]}


def _to_decimal(x: Fraction) -> Decimal:
    return Decimal(x.numerator) / Decimal(x.denominator)


def precise_slope(
    table: PopulationTable,
    policy: Policy,
    budget: float,
    s1: str,
    s2: str,
    metric: str = "lnRD",
    eps: float = 1e-9,
    step: float | None = None,
    digits: int = 50,
) -> float:
    """Central difference of a pair metric, evaluated without rounding error.

    Rates are exact fractions and logarithms are taken at ``digits``
    significant digits, so only the truncation error of the stencil remains.
    ``metric`` is one of ``"G1"``, ``"G2"``, ``"AD"``, ``"lnRD"``.
    """
    h = Fraction(1e-4 * max(1.0, budget) if step is None else step)
    b = Fraction(budget)
    if b - h < 0:
        raise DomainError("stencil reaches a negative budget")
    with localcontext() as ctx:
        ctx.prec = digits
        e = _to_decimal(Fraction(eps))

        def f(x):
            r = exact_rates(table, policy, x)
            g1, g2 = r[s1], r[s2]
            if metric == "G1":
                return _to_decimal(g1)
            if metric == "G2":
                return _to_decimal(g2)
            if metric == "AD":
                return _to_decimal(abs(g1 - g2))
            if metric == "lnRD":
                return (_to_decimal(g1) + e).ln() - (_to_decimal(g2) + e).ln()
            raise ValueError(f"unknown metric {metric!r}")

        return float((f(b + h) - f(b - h)) / (2 * _to_decimal(h)))


def finite_difference(
    metric: Callable[[float], float],
    budget: float,
    step: float | None = None,
    segment: tuple[float, float] | None = None,
) -> float:
    """Central difference of ``metric`` at ``budget``.

    ``step`` defaults to ``1e-4 * max(1, budget)``. With ``segment = (lo, hi)``
    the stencil must sit strictly inside it.
    """
    h = 1e-4 * max(1.0, abs(budget)) if step is None else float(step)
    if not h > 0:
        raise ValueError(f"step must be positive, got {h}")
    if segment is not None:
        lo, hi = segment
        if not (lo < budget - h and budget + h < hi):
            raise UndefinedAtBreakpoint(
                f"stencil [{budget - h}, {budget + h}] straddles a breakpoint of ({lo}, {hi})"
            )
    return (metric(budget + h) - metric(budget - h)) / (2.0 * h)


def segment_around(table: PopulationTable, policy: Policy, budget: float) -> tuple[float, float]:
    """Open budget interval between the breakpoints enclosing ``budget``."""
    edges = np.concatenate([[0.0], breakpoints(table, policy), [math.inf]])
    if budget in edges:
        raise UndefinedAtBreakpoint(f"budget {budget} is a breakpoint")
    j = int(np.searchsorted(edges, budget))
    return float(edges[j - 1]), float(edges[j])


def population_partial_fd(
    table: PopulationTable,
    policy: Policy,
    budget: float,
    category: str,
    wrt: str | None = None,
    order: int = 1,
) -> float:
    """Finite-difference partial of ``category``'s probability w.r.t. a size.

    Sizes are treated as real numbers inside the closed-form probability;
    the step is ``1e-4 * max(1, n)`` of the size being varied.
    """
    wrt = category if wrt is None else wrt
    i = table.category_index(category)
    j = table.category_index(wrt)
    base = table.category_sizes.astype(float)
    h = 1e-4 * max(1.0, base[j])

    def p(delta):
        sizes = base.copy()
        sizes[j] += delta
        return probabilities_for_sizes(policy, table, sizes, budget)[i]

    if order == 1:
        return (p(h) - p(-h)) / (2 * h)
    if order == 2:
        return (p(h) - 2 * p(0.0) + p(-h)) / h**2
    raise ValueError("order must be 1 or 2")
