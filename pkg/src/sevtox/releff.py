"""Nonparametric relative effects for many-to-one comparisons.

The relative effect of group ``j`` against the control is
``P(X < Y) + P(X = Y) / 2`` with ``X`` from the control and ``Y`` from
group ``j``.  Estimates are built from placements (mid-distribution
functions of one sample evaluated at the other), which also yield the
Brunner-Munzel type variances, the covariance between comparisons that
share the control and Satterthwaite degrees of freedom.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .contrasts import williams
from .simultaneous import simultaneous_test
from .tabular import Dataset


def _mid_ecdf(sample: np.ndarray, at: np.ndarray) -> np.ndarray:
    """Normalized mid-distribution function of ``sample`` evaluated at ``at``."""
    s = np.sort(np.asarray(sample, dtype=float))
    at = np.asarray(at, dtype=float)
    below = np.searchsorted(s, at, side="left")
    upto = np.searchsorted(s, at, side="right")
    return (below + upto) / (2.0 * s.size)


def relative_effect(x, y) -> float:
    """``(n_x n_y)^-1 sum_ij [1(x_i < y_j) + 1(x_i = y_j) / 2]``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size == 0 or y.size == 0:
        raise ValueError("both samples must be nonempty")
    # integer counts first, one division at the end
    s = np.sort(x)
    twice = np.searchsorted(s, y, side="left").sum() + np.searchsorted(s, y, side="right").sum()
    return float(twice / (2 * x.size * y.size))


@dataclass
class RelEffectResult:
    labels: tuple[str, ...]
    estimate: np.ndarray
    se: np.ndarray
    statistic: np.ndarray
    raw_p: np.ndarray
    adjusted_p: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    df: float
    corr: np.ndarray
    degenerate: np.ndarray
    alternative: str
    level: float
    warnings: list[str] = field(default_factory=list)

    def rows(self):
        for j, lab in enumerate(self.labels):
            yield {
                "contrast": lab,
                "estimate": float(self.estimate[j]),
                "se": float(self.se[j]),
                "statistic": None if self.degenerate[j] else float(self.statistic[j]),
                "raw_p": float(self.raw_p[j]),
                "adjusted_p": float(self.adjusted_p[j]),
                "lower": float(self.lower[j]),
                "upper": float(self.upper[j]),
                "degenerate": bool(self.degenerate[j]),
            }


def _placements(samples):
    """Control-side and treated-side placements for each treated group."""
    x0 = samples[0]
    ctrl = np.column_stack([_mid_ecdf(s, x0) for s in samples[1:]])  # n0 x (k-1)
    treated = [_mid_ecdf(x0, s) for s in samples[1:]]
    return ctrl, treated


def releff_many_to_one(
    d: Dataset,
    type: str = "dunnett",
    alternative: str = "greater",
    level: float = 0.95,
    seed: int = 0,
    tol: float = 1e-4,
) -> RelEffectResult:
    """Simultaneous inference for relative effects against the control.

    Williams-type rows are mixtures of the top dose groups, weighted by
    sample size; their relative effect is the same weighted mean of the
    pairwise effects.  Joint inference uses a multivariate t with the
    smallest per-row Satterthwaite df, and intervals are clipped to [0, 1].
    """
    if d.k < 2:
        raise ValueError("at least two groups are required")
    samples = [s.astype(float) for s in d.samples()]
    sizes = np.array([s.size for s in samples])
    if type == "dunnett":
        W = np.eye(d.k - 1)
        labels = tuple(f"p( {d.groups[0]} , {g} )" for g in d.groups[1:])
    elif type == "williams":
        W = williams(sizes).coef[:, 1:]
        labels = tuple(f"C {m}" for m in range(1, d.k))
    else:
        raise ValueError(f"unknown contrast type {type!r}")
    ctrl, treated = _placements(samples)
    pairwise = np.array([relative_effect(samples[0], s) for s in samples[1:]])
    est = W @ pairwise

    n0 = sizes[0]
    # per-sample variance components of each row; the control enters through
    # the weighted sum of its placements, group j through its own placements
    ctrl_row = ctrl @ W.T  # n0 x rows
    v0 = ctrl_row.var(axis=0, ddof=1) / n0 if n0 > 1 else np.zeros(W.shape[0])
    vt = np.array([[W[r, j] ** 2 * (treated[j].var(ddof=1) / sizes[j + 1] if sizes[j + 1] > 1 else 0.0)
                    for j in range(d.k - 1)] for r in range(W.shape[0])])
    cov_ctrl = np.cov(ctrl_row, rowvar=False, ddof=1).reshape(W.shape[0], W.shape[0]) / n0 if n0 > 1 \
        else np.zeros((W.shape[0],) * 2)
    cov = cov_ctrl + np.diag(vt.sum(axis=1))
    comps = np.column_stack([v0, vt])
    dof_n = np.concatenate([[n0], sizes[1:]]) - 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        df_rows = comps.sum(axis=1) ** 2 / np.where(dof_n > 0, comps**2 / dof_n, 0.0).sum(axis=1)
    df_rows = df_rows[np.isfinite(df_rows)]
    df = float(max(1.0, df_rows.min())) if df_rows.size else 1000.0

    res = simultaneous_test(est, cov, labels=labels, df=df, alternative=alternative,
                            level=level, tol=tol, seed=seed, null=0.5)
    lower = np.clip(res.lower, 0.0, 1.0)
    upper = np.clip(res.upper, 0.0, 1.0)
    warns = list(res.warnings)
    return RelEffectResult(labels, est, res.se, res.statistic, res.raw_p, res.adjusted_p, lower, upper, df,
                           res.corr, res.degenerate, alternative, level, warns)


__all__ = ["RelEffectResult", "relative_effect", "releff_many_to_one"]
