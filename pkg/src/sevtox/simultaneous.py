"""Max-t simultaneous inference for linear functions of fitted parameters."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr, ndtri, stdtr, stdtrit

from .contrasts import ContrastMatrix
from .models import FitResult
from .mvprob import mv_rectangle_prob

DEFAULT_TOL = 1e-4


@dataclass
class SimTestResult:
    labels: tuple[str, ...]
    estimate: np.ndarray
    se: np.ndarray
    statistic: np.ndarray
    raw_p: np.ndarray
    adjusted_p: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    corr: np.ndarray
    df: int | None
    alternative: str
    level: float
    quantile: float
    error: float
    seed: int
    degenerate: np.ndarray
    flagged: np.ndarray
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
                "separation": bool(self.flagged[j]),
            }


def _marginal_tail(t, df, alternative):
    t = np.asarray(t, dtype=float)
    cdf = ndtr if df is None else (lambda x: stdtr(df, x))
    if alternative == "greater":
        return 1 - cdf(t)
    if alternative == "less":
        return cdf(t)
    return 2 * (1 - cdf(np.abs(t)))


def _bounds(c: float, m: int, alternative: str):
    if alternative == "two-sided":
        return np.full(m, -abs(c)), np.full(m, abs(c))
    if alternative == "greater":
        return np.full(m, -np.inf), np.full(m, c)
    return np.full(m, c), np.full(m, np.inf)


def max_t_pvalue(t: float, R, df, alternative, tol=DEFAULT_TOL, seed=0):
    """``P(max_k X_k >= t)`` for the oriented statistic (one value)."""
    m = R.shape[0]
    lo, hi = _bounds(t, m, alternative)
    res = mv_rectangle_prob(R, lo, hi, df=df, tol=tol, seed=seed)
    return 1.0 - res.value, res.error


def equicoordinate_quantile(R, df=None, level=0.95, alternative="greater", seed=0, tol=DEFAULT_TOL) -> float:
    """Critical value ``q`` with ``P(X_k <= q for all k) = level``.

    For two-sided problems the event is ``|X_k| <= q``.  The same random
    shifts are reused for every evaluation, so the probability is a smooth
    monotone function of ``q`` and bisection is stable.
    """
    R = np.atleast_2d(np.asarray(R, dtype=float))
    m = R.shape[0]
    alpha = 1 - level
    if alternative == "two-sided":
        uni = lambda a: (ndtri(1 - a / 2) if df is None else stdtrit(df, 1 - a / 2))  # noqa: E731
    else:
        uni = lambda a: (ndtri(1 - a) if df is None else stdtrit(df, 1 - a))  # noqa: E731
    lo_q, hi_q = float(uni(alpha)), float(uni(alpha / m))
    if m == 1:
        return lo_q

    def f(q):
        if alternative == "less":
            lo, hi = np.full(m, -q), np.full(m, np.inf)
        else:
            lo, hi = _bounds(q, m, "two-sided" if alternative == "two-sided" else "greater")
        return mv_rectangle_prob(R, lo, hi, df=df, tol=tol, seed=seed).value - level

    a, b = lo_q - 0.05, hi_q + 0.05
    fa, fb = f(a), f(b)
    while fa > 0:
        a -= 0.5
        fa = f(a)
    while fb < 0:
        b += 0.5
        fb = f(b)
    return float(brentq(f, a, b, xtol=1e-6))


def group_linfct(fit: FitResult, K: ContrastMatrix | np.ndarray) -> np.ndarray:
    """Translate contrasts over groups into contrasts over fit coefficients."""
    coef = K.coef if isinstance(K, ContrastMatrix) else np.atleast_2d(K)
    if fit.group_params is None:
        if coef.shape[1] != fit.coef.size:
            raise ValueError("contrast matrix is not conformable with the fit")
        return coef
    if coef.shape[1] != len(fit.group_params):
        raise ValueError("contrast matrix is not conformable with the fit groups")
    L = np.zeros((coef.shape[0], fit.coef.size))
    for g, idx in enumerate(fit.group_params):
        if idx is not None:
            L[:, idx] += coef[:, g]
    return L


def max_t_adjust(
    fit: FitResult,
    L: np.ndarray | ContrastMatrix,
    alternative: str = "greater",
    labels: Sequence[str] | None = None,
    level: float = 0.95,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
    df: int | None | str = "fit",
) -> SimTestResult:
    """Single-step max-t adjusted p-values and simultaneous intervals.

    ``L`` acts on ``fit.coef`` directly (use :func:`group_linfct` to turn a
    group contrast matrix into one).  ``df="fit"`` takes the residual df of
    the fit, ``None`` forces normal theory.
    """
    fit.require_converged()
    if isinstance(L, ContrastMatrix):
        labels = labels or L.labels
        L = L.coef
    L = np.atleast_2d(np.asarray(L, dtype=float))
    if L.shape[1] != fit.coef.size:
        raise ValueError("linear function matrix is not conformable with the fit")
    flagged = np.array([
        any(abs(L[j, i]) > 0 and fit.names[i] in fit.flagged for i in range(L.shape[1]))
        for j in range(L.shape[0])
    ])
    return simultaneous_test(
        L @ fit.coef, L @ fit.cov @ L.T, labels=labels,
        df=fit.df_residual if df == "fit" else df, alternative=alternative,
        level=level, tol=tol, seed=seed, flagged=flagged, warnings=fit.warnings,
    )


def simultaneous_test(
    estimate,
    cov,
    labels: Sequence[str] | None = None,
    df: int | None = None,
    alternative: str = "greater",
    level: float = 0.95,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
    null: float = 0.0,
    flagged=None,
    warnings: Sequence[str] = (),
) -> SimTestResult:
    """Max-t test of ``estimate == null`` given the estimates' covariance.

    Rows with zero variance are excluded from the joint distribution and
    reported with p = 1.
    """
    if alternative not in ("greater", "less", "two-sided"):
        raise ValueError(f"unknown alternative {alternative!r}")
    est = np.atleast_1d(np.asarray(estimate, dtype=float))
    V = np.atleast_2d(np.asarray(cov, dtype=float))
    V = (V + V.T) / 2
    h = est.size
    labels = tuple(labels) if labels is not None else tuple(f"H{j + 1}" for j in range(h))
    flagged = np.zeros(h, dtype=bool) if flagged is None else np.asarray(flagged, dtype=bool)
    var = np.clip(np.diag(V), 0.0, None)
    scale = var.max() if var.size else 0.0
    degenerate = var <= 1e-14 * max(scale, 1e-300)
    se = np.sqrt(var)
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = np.where(degenerate, np.nan, (est - null) / se)
    warns = list(warnings)
    if degenerate.any():
        warns.append(f"{int(degenerate.sum())} hypothesis row(s) with zero variance excluded")
    if flagged.any():
        warns.append("separation suspected: " + ", ".join(np.array(labels)[flagged]))

    keep = ~degenerate
    m = int(keep.sum())
    if m == 0:
        raise ValueError("all hypotheses are degenerate")
    raw = np.ones(h)
    adj = np.ones(h)
    lower = np.where(degenerate, est, np.nan)
    upper = np.where(degenerate, est, np.nan)
    sk = se[keep]
    R = V[np.ix_(keep, keep)] / np.outer(sk, sk)
    np.fill_diagonal(R, 1.0)
    R = np.clip(R, -1.0, 1.0)
    oriented = {"greater": stat, "less": -stat, "two-sided": np.abs(stat)}[alternative]
    side = "two-sided" if alternative == "two-sided" else "greater"
    raw[keep] = _marginal_tail(stat[keep], df, alternative)
    err = 0.0
    for j in np.flatnonzero(keep):
        p, e = max_t_pvalue(oriented[j], R, df, side, tol=tol, seed=seed)
        adj[j] = min(max(p, raw[j]), 1.0)
        err = max(err, e)
    q = equicoordinate_quantile(R, df=df, level=level, alternative=side, seed=seed, tol=tol)
    if alternative in ("greater", "two-sided"):
        lower[keep] = est[keep] - q * sk
    if alternative in ("less", "two-sided"):
        upper[keep] = est[keep] + q * sk
    if alternative == "greater":
        upper[keep] = np.inf
    if alternative == "less":
        lower[keep] = -np.inf
    return SimTestResult(labels, est, se, stat, raw, adj, lower, upper, R, df, alternative,
                         level, q, err, seed, degenerate, flagged, warns)
