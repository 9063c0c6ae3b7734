"""Tukey-type trend test: slopes under several dose scalings, tested jointly.

One GLM slope is fitted per (dose scaling, endpoint) cell.  The joint
distribution of all slopes comes from stacking the per-fit estimating
equations: the sandwich built from per-subject influence contributions
gives the between-model correlation, while each slope keeps its
model-based standard error, so a single cell reduces to the ordinary Wald
test.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .contrasts import SHORT_NAMES, dose_scalings
from .models import fit_glm
from .simultaneous import SimTestResult, simultaneous_test
from .tabular import BinarizedMatrix, Dataset


@dataclass
class TrendStack:
    labels: tuple[str, ...]
    estimate: np.ndarray
    se: np.ndarray
    influence: np.ndarray  # n x cells, per-subject influence of each slope
    cov: np.ndarray
    flagged: np.ndarray
    warnings: list[str] = field(default_factory=list)

    @property
    def corr(self) -> np.ndarray:
        d = np.sqrt(np.diag(self.cov))
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.cov / np.outer(d, d)


def _endpoint_columns(d: Dataset, endpoints, include_raw: bool):
    """(label, values, default family) per endpoint; 0/1 columns are binomial."""
    if isinstance(endpoints, BinarizedMatrix):
        arr, names = endpoints.values.astype(float), list(endpoints.labels)
    else:
        arr = np.asarray(endpoints, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        names = [f"Y{j + 1}" for j in range(arr.shape[1])]
    if include_raw:
        arr = np.column_stack([d.severity.astype(float), arr])
        names.insert(0, "score")
    return [
        (lab, col, "binomial" if np.isin(col, (0.0, 1.0)).all() else "quasipoisson")
        for lab, col in zip(names, arr.T)
    ]


def tukey_trend_fit(
    d: Dataset,
    endpoints: BinarizedMatrix | np.ndarray,
    scalings: Iterable[str] = ("arithmetic", "ordinal", "arithmetic-log"),
    family: str | None = None,
    doses: Sequence[float] | None = None,
    include_raw_score: bool = False,
    zero_log: float | None = None,
) -> TrendStack:
    """Fit one slope model per (scaling, endpoint) and stack them.

    Binary endpoints use a logit GLM and a raw score column a quasi-Poisson
    GLM unless ``family`` forces one family for all cells.
    """
    group_doses = np.asarray(doses, dtype=float) if doses is not None else d.group_doses()
    if group_doses.size != d.k:
        raise ValueError("one dose per group required")
    if np.unique(group_doses).size < 2:
        raise ValueError("need at least two distinct doses")
    order = np.argsort(group_doses, kind="stable")
    scaled = dose_scalings(group_doses[order], list(scalings), zero_log=zero_log)
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)

    labels, est, se, infl, flagged, warns = [], [], [], [], [], []
    for lab, y, fam in _endpoint_columns(d, endpoints, include_raw_score):
        fam = family or fam
        for sc in scaled:
            x = sc.values[rank][d.group_index]
            X = np.column_stack([np.ones(d.n), x])
            cell = f"{lab}.{SHORT_NAMES[sc.kind]}"
            labels.append(cell)
            fit = fit_glm(X, y, fam, names=("(Intercept)", "dose"))
            bad = "dose" in fit.flagged or not fit.converged
            if bad:
                warns.append(f"{cell}: separation suspected or no convergence; excluded")
            est.append(fit.coef[1])
            se.append(fit.se[1])
            infl.append((fit.scores @ fit.bread)[:, 1])
            flagged.append(bad)
    infl = np.column_stack(infl)
    se = np.asarray(se)
    sandwich = infl.T @ infl
    sd = np.sqrt(np.diag(sandwich))
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = sandwich / np.outer(sd, sd)
    rho = np.where(np.isfinite(rho), rho, 0.0)
    np.fill_diagonal(rho, 1.0)
    cov = rho * np.outer(se, se)
    return TrendStack(tuple(labels), np.asarray(est), se, infl, cov, np.asarray(flagged), warns)


def tukey_trend_test(
    stack: TrendStack,
    alternative: str = "greater",
    level: float = 0.95,
    seed: int = 0,
    tol: float = 1e-4,
) -> SimTestResult:
    """Joint max-t (asymptotic normal) test over all non-flagged slope cells."""
    keep = ~stack.flagged
    if not keep.any():
        raise ValueError("all trend cells are degenerate")
    idx = np.flatnonzero(keep)
    sub = simultaneous_test(
        stack.estimate[idx], stack.cov[np.ix_(idx, idx)],
        labels=[stack.labels[i] for i in idx], df=None, alternative=alternative,
        level=level, tol=tol, seed=seed, warnings=stack.warnings,
    )
    h = len(stack.labels)

    def fill(values, default):
        out = np.full(h, default, dtype=float)
        out[idx] = values
        return out

    degenerate = np.ones(h, dtype=bool)
    degenerate[idx] = sub.degenerate
    return SimTestResult(
        stack.labels, stack.estimate.copy(), stack.se.copy(), fill(sub.statistic, np.nan),
        fill(sub.raw_p, 1.0), fill(sub.adjusted_p, 1.0), fill(sub.lower, np.nan),
        fill(sub.upper, np.nan), sub.corr, None, alternative, level, sub.quantile, sub.error,
        seed, degenerate, stack.flagged.copy(), sub.warnings,
    )
