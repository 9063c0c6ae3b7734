"""Multiple-contrast matrices (dose as a factor) and dose scalings (dose as a covariate)."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

ROW_SUM_TOL = 1e-12


@dataclass
class ContrastMatrix:
    labels: tuple[str, ...]
    coef: np.ndarray
    group_sizes: tuple[int, ...]
    kind: str = "custom"

    def __post_init__(self):
        self.coef = np.atleast_2d(np.asarray(self.coef, dtype=float))
        if self.coef.shape[0] != len(self.labels):
            raise ValueError("one label per contrast row required")
        if self.coef.shape[1] != len(self.group_sizes):
            raise ValueError("contrast columns must match the number of groups")
        validate(self)

    @property
    def shape(self) -> tuple[int, int]:
        return self.coef.shape


def validate(K: ContrastMatrix) -> None:
    sums = np.abs(K.coef.sum(axis=1))
    bad = np.flatnonzero(sums > ROW_SUM_TOL * np.maximum(1.0, np.abs(K.coef).max(axis=1)))
    if bad.size:
        raise ValueError(f"contrast row {K.labels[bad[0]]!r} does not sum to zero")
    if not np.all(np.abs(K.coef).sum(axis=1) > 0):
        raise ValueError("contrast rows must not be all zero")


def _check(group_sizes: Sequence[int]) -> tuple[int, ...]:
    sizes = tuple(int(n) for n in group_sizes)
    if len(sizes) < 2:
        raise ValueError("at least two groups are required for contrasts")
    if min(sizes) < 1:
        raise ValueError("group sizes must be positive")
    return sizes


def dunnett(group_sizes: Sequence[int], names: Sequence[str] | None = None) -> ContrastMatrix:
    """Many-to-one comparisons of each group against the first (control)."""
    sizes = _check(group_sizes)
    k = len(sizes)
    names = list(names) if names is not None else [str(i + 1) for i in range(k)]
    coef = np.zeros((k - 1, k))
    coef[:, 0] = -1.0
    coef[np.arange(k - 1), np.arange(1, k)] = 1.0
    labels = tuple(f"{names[i]} - {names[0]}" for i in range(1, k))
    return ContrastMatrix(labels, coef, sizes, "dunnett")


def williams(group_sizes: Sequence[int]) -> ContrastMatrix:
    """Williams-type contrasts.

    Row ``m`` compares the sample-size weighted mean of the ``m`` highest
    dose groups with the control, so row 1 is the top dose alone and the
    last row pools every treated group.
    """
    sizes = _check(group_sizes)
    k = len(sizes)
    n = np.asarray(sizes, dtype=float)
    coef = np.zeros((k - 1, k))
    for m in range(1, k):
        top = np.arange(k - m, k)
        coef[m - 1, 0] = -1.0
        coef[m - 1, top] = n[top] / n[top].sum()
    labels = tuple(f"C {m}" for m in range(1, k))
    return ContrastMatrix(labels, coef, sizes, "williams")


def from_rows(
    rows: Iterable[Sequence[float]],
    group_sizes: Sequence[int],
    labels: Sequence[str] | None = None,
) -> ContrastMatrix:
    coef = np.array([list(map(float, r)) for r in rows])
    if labels is None:
        labels = [f"K{i + 1}" for i in range(coef.shape[0])]
    return ContrastMatrix(tuple(labels), coef, tuple(int(n) for n in group_sizes))


def parse_contrast_csv(text: str, group_sizes: Sequence[int]) -> ContrastMatrix:
    """Custom contrasts, one row per hypothesis.

    A header row is optional.  When the first field of a data row is not
    numeric it is taken as the row label.
    """
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    k = len(group_sizes)
    labels, coefs = [], []
    for i, row in enumerate(rows, start=1):
        cells = [c.strip() for c in row]
        label = None
        if len(cells) == k + 1:
            label, cells = cells[0], cells[1:]
        if len(cells) != k:
            raise ValueError(f"contrast row {i}: expected {k} coefficients")
        try:
            vals = [float(c) for c in cells]
        except ValueError:
            if i == 1:
                continue  # header
            raise ValueError(f"contrast row {i}: non-numeric coefficient") from None
        labels.append(label or f"K{len(labels) + 1}")
        coefs.append(vals)
    if not coefs:
        raise ValueError("no contrast rows")
    return from_rows(coefs, group_sizes, labels)


def make_contrasts(kind: str, group_sizes: Sequence[int], names: Sequence[str] | None = None) -> ContrastMatrix:
    if kind == "dunnett":
        return dunnett(group_sizes, names)
    if kind == "williams":
        return williams(group_sizes)
    raise ValueError(f"unknown contrast type {kind!r}")


@dataclass
class DoseScaling:
    kind: str
    values: np.ndarray

    @property
    def label(self) -> str:
        return SHORT_NAMES[self.kind]


SHORT_NAMES = {"arithmetic": "ari", "ordinal": "ord", "arithmetic-log": "arilog"}
_ALIASES = {"ari": "arithmetic", "ord": "ordinal", "arilog": "arithmetic-log", "log": "arithmetic-log"}


def dose_scalings(
    doses: Sequence[float],
    kinds: Iterable[str] = ("arithmetic", "ordinal", "arithmetic-log"),
    zero_log: float | None = None,
) -> list[DoseScaling]:
    """Scaled per-group dose scores.

    The log scaling cannot take log(0); the zero dose is placed one
    log-step below the smallest positive dose, ``2 log d1 - log d2``,
    unless ``zero_log`` supplies the value explicitly.
    """
    d = np.asarray(doses, dtype=float)
    if d.ndim != 1 or d.size < 2:
        raise ValueError("need at least two doses")
    if (d < 0).any():
        raise ValueError("doses must be nonnegative")
    if (np.diff(d) <= 0).any():
        raise ValueError("doses must be strictly increasing")
    out = []
    for kind in kinds:
        kind = _ALIASES.get(kind, kind)
        if kind == "arithmetic":
            vals = d.copy()
        elif kind == "ordinal":
            vals = np.arange(d.size, dtype=float)
        elif kind == "arithmetic-log":
            pos = d[d > 0]
            with np.errstate(divide="ignore"):
                vals = np.log(d)
            if (d == 0).any():
                if zero_log is None:
                    if pos.size < 2:
                        raise ValueError("log scaling needs at least two positive doses")
                    zero_log = 2 * np.log(pos[0]) - np.log(pos[1])
                vals[d == 0] = zero_log
                if not (np.diff(vals) > 0).all():
                    raise ValueError("substitute log value must lie below log of the smallest dose")
        else:
            raise ValueError(f"unknown dose scaling {kind!r}")
        out.append(DoseScaling(kind, vals))
    return out
