"""Population counts broken down by category and subgroup.

A :class:`PopulationTable` holds the integer count ``n[i, s]`` of people in
category ``i`` who belong to subgroup ``s``. Everything downstream (allocation
probabilities, receipt rates, derivatives) reads its sizes from here.

CSV layout::

    category,subgroup,count
    Families,refugee,1857
    Families,non_refugee,1238
    ...

Row order fixes the declaration order of both categories and subgroups.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

from .errors import DomainError, ParseError, ValidationError

HEADER = ("category", "subgroup", "count")


@dataclass(frozen=True)
class TableStats:
    total: int
    n_categories: int
    category_sizes: dict[str, int]
    subgroup_sizes: dict[str, int]


@dataclass(frozen=True, eq=False)
class PopulationTable:
    """Immutable ``K x S`` count matrix with labelled rows and columns."""

    categories: tuple[str, ...]
    subgroups: tuple[str, ...]
    counts: np.ndarray = field(repr=False)

    def __post_init__(self):
        cats = tuple(self.categories)
        subs = tuple(self.subgroups)
        _check_labels(cats, "category")
        _check_labels(subs, "subgroup")
        raw = np.asarray(self.counts)
        if raw.shape != (len(cats), len(subs)):
            raise ValidationError(
                f"counts has shape {raw.shape}, expected {(len(cats), len(subs))}"
            )
        if raw.dtype.kind == "f":
            if not np.all(np.isfinite(raw)) or np.any(raw != np.round(raw)):
                raise ValidationError("counts must be integers")
        elif raw.dtype.kind not in "iub":
            raise ValidationError(f"counts must be integers, got dtype {raw.dtype}")
        arr = raw.astype(np.int64)
        if np.any(arr < 0):
            i, s = np.argwhere(arr < 0)[0]
            raise ValidationError(
                f"negative count {arr[i, s]} for ({cats[i]}, {subs[s]})"
            )
        sizes = arr.sum(axis=1)
        for label, size in zip(cats, sizes):
            if size < 1:
                raise ValidationError(f"category {label!r} is empty")
        arr.setflags(write=False)
        object.__setattr__(self, "categories", cats)
        object.__setattr__(self, "subgroups", subs)
        object.__setattr__(self, "counts", arr)

    @classmethod
    def from_records(cls, records: Iterable[tuple[str, str, int]]) -> "PopulationTable":
        """Build a table from ``(category, subgroup, count)`` triples.

        Pairs that never appear are zero. A repeated pair is an error.
        """
        cats: dict[str, int] = {}
        subs: dict[str, int] = {}
        cells: dict[tuple[int, int], int] = {}
        for cat, sub, count in records:
            i = cats.setdefault(cat, len(cats))
            s = subs.setdefault(sub, len(subs))
            if (i, s) in cells:
                raise ValidationError(f"duplicate pair ({cat}, {sub})")
            cells[i, s] = count
        counts = np.zeros((len(cats), len(subs)), dtype=np.int64)
        for (i, s), count in cells.items():
            counts[i, s] = count
        return cls(tuple(cats), tuple(subs), counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def n_categories(self) -> int:
        return len(self.categories)

    @property
    def category_sizes(self) -> np.ndarray:
        """``n_i`` in declaration order."""
        return self.counts.sum(axis=1)

    @property
    def subgroup_sizes(self) -> np.ndarray:
        """``N_s`` in declaration order."""
        return self.counts.sum(axis=0)

    def category_index(self, label: str) -> int:
        try:
            return self.categories.index(label)
        except ValueError:
            raise KeyError(f"unknown category {label!r}") from None

    def subgroup_index(self, label: str) -> int:
        try:
            return self.subgroups.index(label)
        except ValueError:
            raise KeyError(f"unknown subgroup {label!r}") from None

    def subgroup_column(self, label: str) -> np.ndarray:
        """Per-category counts of one subgroup; raises if the subgroup is empty."""
        s = self.subgroup_index(label)
        col = self.counts[:, s]
        if col.sum() < 1:
            raise DomainError(f"subgroup {label!r} has no members")
        return col

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(HEADER)
        for i, cat in enumerate(self.categories):
            for s, sub in enumerate(self.subgroups):
                writer.writerow((cat, sub, int(self.counts[i, s])))
        return buf.getvalue()

    def __eq__(self, other):
        if not isinstance(other, PopulationTable):
            return NotImplemented
        return (
            self.categories == other.categories
            and self.subgroups == other.subgroups
            and np.array_equal(self.counts, other.counts)
        )

    def __hash__(self):
        return hash((self.categories, self.subgroups, self.counts.tobytes()))


def _check_labels(labels: tuple[str, ...], kind: str) -> None:
    if not labels:
        raise ValidationError(f"at least one {kind} is required")
    seen = set()
    for label in labels:
        if not isinstance(label, str) or not label:
            raise ValidationError(f"{kind} labels must be non-empty text")
        if label in seen:
            raise ValidationError(f"duplicate {kind} label {label!r}")
        seen.add(label)


def load_population(source: TextIO) -> PopulationTable:
    """Parse a ``category,subgroup,count`` CSV stream into a validated table."""
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty input, expected header", 1) from None
    if tuple(h.strip() for h in header) != HEADER:
        raise ParseError(f"header must be {','.join(HEADER)}", 1)

    records = []
    seen: set[tuple[str, str]] = set()
    for row in reader:
        line = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 fields, got {len(row)}", line)
        cat, sub, raw = (cell.strip() for cell in row)
        if not cat or not sub:
            raise ParseError("empty category or subgroup label", line)
        try:
            count = int(raw)
        except ValueError:
            try:
                float(raw)
            except ValueError:
                raise ParseError(f"count {raw!r} is not a number", line) from None
            raise ValidationError(f"line {line}: count {raw!r} is not an integer") from None
        if count < 0:
            raise ValidationError(f"line {line}: negative count {count}")
        if (cat, sub) in seen:
            raise ValidationError(f"line {line}: duplicate pair ({cat}, {sub})")
        seen.add((cat, sub))
        records.append((cat, sub, count))
    if not records:
        raise ValidationError("population file has no data rows")
    return PopulationTable.from_records(records)


def read_population(path: str | Path) -> PopulationTable:
    with open(path, newline="", encoding="utf-8") as fh:
        return load_population(fh)


def table_stats(table: PopulationTable) -> TableStats:
    return TableStats(
        total=table.total,
        n_categories=table.n_categories,
        category_sizes={c: int(n) for c, n in zip(table.categories, table.category_sizes)},
        subgroup_sizes={s: int(n) for s, n in zip(table.subgroups, table.subgroup_sizes)},
    )
