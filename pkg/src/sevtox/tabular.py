"""Severity data containers and CSV ingestion.

Two shapes are supported: long per-subject records (group, optional dose,
severity grade) and the compact c-by-k count table with one row per group
and one column per grade.  Both convert losslessly into each other.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np


class ParseError(ValueError):
    """Raised for malformed severity input; the message names the row."""


@dataclass(frozen=True)
class SubjectRecord:
    group: str
    severity: int
    dose: float | None = None


@dataclass
class Dataset:
    """Per-subject severity data.

    ``group_index[i]`` points into ``groups``; the first group is the control.
    ``grades`` is the declared ordered list of admissible grade values.
    """

    groups: tuple[str, ...]
    group_index: np.ndarray
    severity: np.ndarray
    grades: tuple[int, ...]
    doses: dict[str, float] | None = None
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.group_index = np.asarray(self.group_index, dtype=np.intp)
        self.severity = np.asarray(self.severity, dtype=np.int64)
        if self.group_index.shape != self.severity.shape:
            raise ValueError("group_index and severity must have equal length")
        if len(self.grades) < 2 or list(self.grades) != sorted(set(self.grades)):
            raise ValueError("grades must be at least two strictly increasing values")
        if self.severity.size and not np.isin(self.severity, self.grades).all():
            raise ValueError("severity outside the declared grades")
        if self.group_index.size and (
            self.group_index.min() < 0 or self.group_index.max() >= len(self.groups)
        ):
            raise ValueError("group index out of range")
        if len(self.groups) < 2 and "no comparisons possible" not in self.warnings:
            self.warnings.append("no comparisons possible")

    @property
    def n(self) -> int:
        return int(self.severity.size)

    @property
    def k(self) -> int:
        return len(self.groups)

    @property
    def g_min(self) -> int:
        return self.grades[0]

    @property
    def g_max(self) -> int:
        return self.grades[-1]

    @property
    def control(self) -> str:
        return self.groups[0]

    def group_sizes(self) -> np.ndarray:
        return np.bincount(self.group_index, minlength=self.k)

    def samples(self) -> list[np.ndarray]:
        """Severity values split by group, in group order."""
        return [self.severity[self.group_index == g] for g in range(self.k)]

    def group_doses(self) -> np.ndarray:
        if self.doses is None:
            raise ValueError("dataset carries no dose values")
        return np.array([self.doses[g] for g in self.groups], dtype=float)

    def subject_doses(self) -> np.ndarray:
        return self.group_doses()[self.group_index]

    def records(self) -> list[SubjectRecord]:
        doses = self.doses or {}
        return [
            SubjectRecord(self.groups[g], int(s), doses.get(self.groups[g]))
            for g, s in zip(self.group_index, self.severity)
        ]

    def with_doses(self, doses: Sequence[float]) -> "Dataset":
        if len(doses) != self.k:
            raise ValueError(f"expected {self.k} doses, got {len(doses)}")
        return Dataset(
            self.groups,
            self.group_index,
            self.severity,
            self.grades,
            dict(zip(self.groups, map(float, doses))),
            list(self.warnings),
        )

    def select(self, groups: Sequence[str]) -> "Dataset":
        """Keep only subjects in ``groups`` (in the given order; first is control)."""
        groups = [str(g) for g in groups]
        missing = set(groups) - set(self.groups)
        if missing:
            raise ValueError(f"unknown group(s): {', '.join(sorted(missing))}")
        remap = np.full(self.k, -1)
        for i, g in enumerate(groups):
            remap[self.groups.index(g)] = i
        new_index = remap[self.group_index]
        keep = new_index >= 0
        return Dataset(
            tuple(groups),
            new_index[keep],
            self.severity[keep],
            self.grades,
            {g: self.doses[g] for g in groups} if self.doses else None,
            list(self.warnings),
        )

    def reorder_control(self, control: str) -> "Dataset":
        """Return a copy whose first (control) group is ``control``."""
        if control not in self.groups:
            raise ValueError(f"unknown control group {control!r}")
        order = [control] + [g for g in self.groups if g != control]
        remap = np.array([order.index(g) for g in self.groups])
        return Dataset(
            tuple(order),
            remap[self.group_index],
            self.severity,
            self.grades,
            self.doses,
            list(self.warnings),
        )


@dataclass
class SeverityTable:
    groups: tuple[str, ...]
    grades: tuple[int, ...]
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (len(self.groups), len(self.grades)):
            raise ValueError("counts shape does not match groups x grades")
        if (self.counts < 0).any():
            raise ValueError("negative count")
        for g, row in zip(self.groups, self.counts):
            if row.sum() < 1:
                raise ValueError(f"empty group {g!r}")

    def __eq__(self, other):
        if not isinstance(other, SeverityTable):
            return NotImplemented
        return (
            self.groups == other.groups
            and self.grades == other.grades
            and np.array_equal(self.counts, other.counts)
        )

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class BinarizedMatrix:
    """Indicator endpoints ``values[:, j] = severity > cutpoints[j]``."""

    cutpoints: tuple[int, ...]
    values: np.ndarray
    labels: tuple[str, ...]
    warnings: list[str] = field(default_factory=list)

    def with_raw_score(self, d: Dataset, label: str = "score") -> "BinarizedMatrix":
        """Append the untransformed severity as an extra endpoint column."""
        vals = np.column_stack([d.severity.astype(float), self.values])
        return BinarizedMatrix(
            self.cutpoints, vals, (label,) + self.labels, list(self.warnings)
        )


def _parse_int(text: str, row: int, what: str) -> int:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"row {row}: non-integer {what} {text!r}") from None
    if not value.is_integer():
        raise ParseError(f"row {row}: non-integer {what} {text!r}")
    return int(value)


def parse_long_csv(
    text: str | io.TextIOBase,
    schema: Mapping[str, str] | None = None,
    group_order: Sequence[str] | None = None,
    grades: Sequence[int] | None = None,
) -> Dataset:
    """Parse per-subject CSV into a :class:`Dataset`.

    ``schema`` maps the logical columns ``group``, ``severity`` and the
    optional ``dose`` to header names.  Groups keep first-appearance order
    unless ``group_order`` is given.  The grade range defaults to the
    observed min..max.
    """
    schema = {"group": "group", "severity": "severity", "dose": "dose", **(schema or {})}
    stream = io.StringIO(text) if isinstance(text, str) else text
    reader = csv.reader(stream)
    header = next(reader, None)
    if not header:
        raise ParseError("missing header row")
    header = [h.strip() for h in header]
    cols = {}
    for key in ("group", "severity"):
        if schema[key] not in header:
            raise ParseError(f"missing column {schema[key]!r}")
        cols[key] = header.index(schema[key])
    dose_col = header.index(schema["dose"]) if schema["dose"] in header else None

    labels, sev, doses = [], [], {}
    for rownum, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"row {rownum}: expected {len(header)} fields, got {len(row)}")
        label = row[cols["group"]].strip()
        if not label:
            raise ParseError(f"row {rownum}: empty group")
        s = row[cols["severity"]].strip()
        if not s:
            raise ParseError(f"row {rownum}: missing severity")
        sev.append(_parse_int(s, rownum, "severity"))
        labels.append(label)
        if dose_col is not None:
            try:
                dose = float(row[dose_col])
            except ValueError:
                raise ParseError(f"row {rownum}: invalid dose {row[dose_col]!r}") from None
            if dose < 0:
                raise ParseError(f"row {rownum}: negative dose")
            if doses.setdefault(label, dose) != dose:
                raise ParseError(f"row {rownum}: inconsistent dose for group {label!r}")
    if not sev:
        raise ParseError("no records")

    if group_order is None:
        order = list(dict.fromkeys(labels))
    else:
        order = [str(g) for g in group_order]
        for rownum, label in enumerate(labels, start=2):
            if label not in order:
                raise ParseError(f"row {rownum}: unknown group {label!r}")
    index = {g: i for i, g in enumerate(order)}
    if grades is None:
        lo, hi = min(sev), max(sev)
        grades = list(range(lo, max(hi, lo + 1) + 1))
    grades = tuple(int(g) for g in grades)
    for rownum, s in enumerate(sev, start=2):
        if s not in grades:
            raise ParseError(f"row {rownum}: severity {s} outside declared grades")
    return Dataset(
        tuple(order),
        np.array([index[g] for g in labels]),
        np.array(sev),
        grades,
        {g: doses[g] for g in order} if dose_col is not None and doses.keys() == set(order) else None,
    )


def parse_table_csv(text: str | io.TextIOBase) -> SeverityTable:
    """Parse a c-by-k count table: first column group labels, header grades."""
    stream = io.StringIO(text) if isinstance(text, str) else text
    rows = [r for r in csv.reader(stream) if r and any(c.strip() for c in r)]
    if not rows:
        raise ParseError("missing header row")
    header = [c.strip() for c in rows[0]]
    if len(header) < 3:
        raise ParseError("table needs a group column and at least two grade columns")
    grades = tuple(_parse_int(g, 1, "grade label") for g in header[1:])
    if list(grades) != sorted(set(grades)):
        raise ParseError("row 1: grade labels must be strictly increasing")
    groups, counts = [], []
    for rownum, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"row {rownum}: ragged row ({len(row)} fields, expected {len(header)})")
        vals = [_parse_int(c.strip(), rownum, "count") for c in row[1:]]
        if any(v < 0 for v in vals):
            raise ParseError(f"row {rownum}: negative count")
        if sum(vals) == 0:
            raise ParseError(f"row {rownum}: empty group {row[0].strip()!r}")
        groups.append(row[0].strip())
        counts.append(vals)
    if not groups:
        raise ParseError("no records")
    if len(set(groups)) != len(groups):
        raise ParseError("duplicate group label")
    return SeverityTable(tuple(groups), grades, np.array(counts))


def expand_table(t: SeverityTable, doses: Sequence[float] | None = None) -> Dataset:
    """One subject record per count unit, grouped in table order."""
    gi, sev = [], []
    for g, row in enumerate(t.counts):
        for grade, c in zip(t.grades, row):
            gi.extend([g] * int(c))
            sev.extend([grade] * int(c))
    d = Dataset(t.groups, np.array(gi), np.array(sev), t.grades)
    return d.with_doses(doses) if doses is not None else d


def collapse(d: Dataset) -> SeverityTable:
    counts = np.zeros((d.k, len(d.grades)), dtype=np.int64)
    pos = np.searchsorted(d.grades, d.severity)
    np.add.at(counts, (d.group_index, pos), 1)
    return SeverityTable(d.groups, d.grades, counts)


def from_records(
    records: Iterable[SubjectRecord],
    group_order: Sequence[str] | None = None,
    grades: Sequence[int] | None = None,
) -> Dataset:
    records = list(records)
    if not records:
        raise ParseError("no records")
    order = list(group_order) if group_order else list(dict.fromkeys(r.group for r in records))
    index = {g: i for i, g in enumerate(order)}
    sev = [r.severity for r in records]
    if grades is None:
        grades = range(min(sev), max(max(sev), min(sev) + 1) + 1)
    doses = None
    if all(r.dose is not None for r in records):
        doses = {r.group: float(r.dose) for r in records}
    return Dataset(tuple(order), np.array([index[r.group] for r in records]), np.array(sev),
                   tuple(grades), doses)


def binarize(d: Dataset, cutpoints: Sequence[int] | None = None) -> BinarizedMatrix:
    """Cut-point indicators ``severity > c`` for each cutpoint ``c``."""
    if cutpoints is None:
        cutpoints = list(range(d.g_min, d.g_max))
    cutpoints = tuple(int(c) for c in cutpoints)
    if not cutpoints:
        raise ValueError("at least one cutpoint required")
    for c in cutpoints:
        if not d.g_min <= c < d.g_max:
            raise ValueError(f"cutpoint {c} outside [{d.g_min}, {d.g_max - 1}]")
    values = (d.severity[:, None] > np.array(cutpoints)[None, :]).astype(np.int64)
    warns = []
    for c, col in zip(cutpoints, values.T):
        if col.min() == col.max():
            warns.append(f"endpoint >{c} is constant (all {int(col[0]) if col.size else 0})")
    return BinarizedMatrix(cutpoints, values, tuple(f">{c}" for c in cutpoints), warns)


def write_long_csv(d: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    has_dose = d.doses is not None
    w.writerow(["group", "dose", "severity"] if has_dose else ["group", "severity"])
    for r in d.records():
        w.writerow([r.group, _fmt_num(r.dose), r.severity] if has_dose else [r.group, r.severity])
    return buf.getvalue()


def write_table_csv(t: SeverityTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["group", *t.grades])
    for g, row in zip(t.groups, t.counts):
        w.writerow([g, *map(int, row)])
    return buf.getvalue()


def _fmt_num(x: float | None) -> str:
    if x is None:
        return ""
    return str(int(x)) if float(x).is_integer() else repr(float(x))
