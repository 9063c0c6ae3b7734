"""Parametric fitters for the comparator analyses.

Linear model on Freeman-Tukey transformed scores, binomial and
quasi-Poisson GLMs by IRLS, the proportional-odds cumulative logit model
and the baseline-category multinomial logit model, both by damped Newton
iterations with analytic derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit, ndtri

SEP_COEF = 15.0
SEP_SE = 100.0
MAX_HALVINGS = 10


class FitError(RuntimeError):
    """Raised when a fit cannot deliver trustworthy estimates."""


@dataclass
class FitResult:
    """Estimates of a parametric fit.

    ``group_params`` maps each group (control first) to the index of the
    coefficient carrying its effect, or ``None`` for a group whose effect is
    fixed at zero.  ``df_residual`` is ``None`` for asymptotic (z-based)
    inference.
    """

    names: tuple[str, ...]
    coef: np.ndarray
    cov: np.ndarray
    df_residual: int | None
    dispersion: float = 1.0
    converged: bool = True
    iterations: int = 0
    loglik: float | None = None
    warnings: list[str] = field(default_factory=list)
    flagged: frozenset[str] = frozenset()
    group_params: tuple | None = None
    intercepts: dict | None = None
    scores: np.ndarray | None = None  # per-subject score contributions
    bread: np.ndarray | None = None  # inverse unscaled information

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))

    def require_converged(self) -> None:
        if not self.converged:
            raise FitError("fit did not converge; refusing to report inference")

    def index(self, name: str) -> int:
        return self.names.index(name)


def _flag_separation(names, coef, se, logit=True) -> tuple[list[str], frozenset[str]]:
    bad = [
        n for n, b, s in zip(names, coef, se)
        if (logit and abs(b) > SEP_COEF) or not np.isfinite(s) or s > SEP_SE
    ]
    if not bad:
        return [], frozenset()
    return [f"separation suspected: {', '.join(bad)}"], frozenset(bad)


def _safe_inverse(H: np.ndarray) -> np.ndarray:
    try:
        inv = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        inv = np.linalg.pinv(H)
    return (inv + inv.T) / 2


def freeman_tukey(y):
    """Freeman-Tukey transform ``sqrt(y) + sqrt(y + 1)``."""
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ValueError("Freeman-Tukey transform needs nonnegative values")
    out = np.sqrt(y) + np.sqrt(y + 1.0)
    return float(out) if out.ndim == 0 else out


def group_design(group_index: np.ndarray, k: int, intercept: bool = False) -> np.ndarray:
    """One-hot group design; with ``intercept`` the control column becomes the intercept."""
    X = np.zeros((len(group_index), k))
    X[np.arange(len(group_index)), group_index] = 1.0
    if intercept:
        X[:, 0] = 1.0
    return X


def fit_lm(X, y, names: Sequence[str] | None = None) -> FitResult:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if np.linalg.matrix_rank(X) < p:
        raise FitError("design matrix is rank deficient")
    if n <= p:
        raise FitError("no residual degrees of freedom")
    XtX_inv = _safe_inverse(X.T @ X)
    coef = XtX_inv @ X.T @ y
    resid = y - X @ coef
    s2 = float(resid @ resid) / (n - p)
    warns = []
    if s2 <= 1e-14 * max(1.0, float(y @ y) / n):
        warns.append("zero residual variance")
        s2 = 0.0
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(p))
    return FitResult(names, coef, s2 * XtX_inv, n - p, dispersion=s2, warnings=warns,
                     scores=X * resid[:, None], bread=XtX_inv)


FAMILIES = ("binomial", "quasipoisson", "poisson")


def fit_glm(
    X,
    y,
    family: str = "binomial",
    names: Sequence[str] | None = None,
    max_iter: int = 50,
    tol: float = 1e-10,
) -> FitResult:
    """IRLS for canonical-link binomial (logit) and (quasi-)Poisson (log) models.

    Stops when the relative coefficient change or the relative deviance
    change drops below ``tol``; a diverging separated fit settles through
    the deviance criterion and is flagged instead of raising.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if np.linalg.matrix_rank(X) < p:
        raise FitError("design matrix is rank deficient")
    if family == "binomial":
        if not np.isin(y, (0.0, 1.0)).all():
            raise ValueError("binomial response must be 0/1")
        mu = (y + 0.5) / 2
        eta = np.log(mu / (1 - mu))
    else:
        if np.any(y < 0) or not np.all(np.mod(y, 1) == 0):
            raise ValueError("Poisson response must be nonnegative integers")
        mu = y + 0.1
        eta = np.log(mu)
    beta = np.zeros(p)
    dev_old = np.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        w = mu * (1 - mu) if family == "binomial" else mu
        w = np.maximum(w, 1e-300)
        z = eta + (y - mu) / w
        XtW = X.T * w
        beta_new = np.linalg.solve(XtW @ X, XtW @ z)
        eta = X @ beta_new
        mu = expit(eta) if family == "binomial" else np.exp(eta)
        dev = _deviance(y, mu, family)
        dbeta = np.max(np.abs(beta_new - beta)) / (np.max(np.abs(beta_new)) + tol)
        ddev = abs(dev - dev_old) / (abs(dev) + 0.1)
        beta, dev_old = beta_new, dev
        if dbeta < tol or ddev < tol:
            converged = True
            break
    w = mu * (1 - mu) if family == "binomial" else mu
    bread = _safe_inverse((X.T * w) @ X)
    resid = y - mu
    if family == "quasipoisson":
        with np.errstate(divide="ignore", invalid="ignore"):
            pearson = np.where(mu > 0, resid**2 / mu, 0.0).sum()
        dispersion = float(pearson / (n - p)) if n > p else np.nan
    else:
        dispersion = 1.0
    cov = dispersion * bread
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(p))
    warns, flagged = _flag_separation(names, beta, np.sqrt(np.clip(np.diag(cov), 0, None)),
                                      logit=family == "binomial")
    if family == "binomial" and (np.all(y == 0) or np.all(y == 1)):
        flagged = frozenset(names)
        warns = [f"separation suspected: {', '.join(names)}"]
    if not converged:
        warns.append(f"IRLS did not converge in {max_iter} iterations")
    return FitResult(names, beta, cov, None, dispersion, converged, it,
                     loglik=-dev / 2, warnings=warns, flagged=flagged,
                     scores=X * resid[:, None], bread=bread)


def _deviance(y, mu, family):
    with np.errstate(divide="ignore", invalid="ignore"):
        if family == "binomial":
            ll = np.where(y > 0, y * np.log(mu), 0.0) + np.where(y < 1, (1 - y) * np.log1p(-mu), 0.0)
            return float(-2 * ll.sum())
        term = np.where(y > 0, y * np.log(y / mu), 0.0) - (y - mu)
        return float(2 * term.sum())


# ------------------------------------------------------------------ #
# Proportional odds
# ------------------------------------------------------------------ #


def _counts(scores, groups, k=None):
    scores = np.asarray(scores)
    groups = np.asarray(groups, dtype=np.intp)
    levels = np.unique(scores)
    k = int(groups.max()) + 1 if k is None else k
    counts = np.zeros((k, levels.size))
    np.add.at(counts, (groups, np.searchsorted(levels, scores)), 1)
    return levels, counts


def prop_odds_loglik(params: np.ndarray, counts: np.ndarray, derivatives: bool = False):
    """Log-likelihood of ``logit P(Y <= j | g) = theta_j - beta_g``, ``beta_1 = 0``.

    ``params`` is ``(theta_1..theta_{J-1}, beta_2..beta_k)``; ``counts`` is
    groups x categories.  With ``derivatives`` the analytic gradient and
    Hessian are returned as well.
    """
    k, J = counts.shape
    theta = params[: J - 1]
    beta = np.concatenate([[0.0], params[J - 1 :]])
    npar = params.size
    eta = theta[None, :] - beta[:, None]  # k x (J-1)
    F = np.concatenate([np.zeros((k, 1)), expit(eta), np.ones((k, 1))], axis=1)
    P = np.diff(F, axis=1)
    if np.any(P[counts > 0] <= 0):
        return (-np.inf, None, None) if derivatives else -np.inf
    ll = float((counts[counts > 0] * np.log(P[counts > 0])).sum())
    if not derivatives:
        return ll
    f = F[:, 1:-1] * (1 - F[:, 1:-1])
    fp = f * (1 - 2 * F[:, 1:-1])
    grad = np.zeros(npar)
    hess = np.zeros((npar, npar))

    def deta(g, j):
        v = np.zeros(npar)
        v[j] = 1.0
        if g > 0:
            v[J - 1 + g - 1] = -1.0
        return v

    for g in range(k):
        for c in range(J):
            n = counts[g, c]
            if n == 0:
                continue
            gi = np.zeros(npar)
            hi = np.zeros((npar, npar))
            if c < J - 1:
                v = deta(g, c)
                gi += f[g, c] * v
                hi += fp[g, c] * np.outer(v, v)
            if c > 0:
                v = deta(g, c - 1)
                gi -= f[g, c - 1] * v
                hi -= fp[g, c - 1] * np.outer(v, v)
            gi /= P[g, c]
            hi = hi / P[g, c] - np.outer(gi, gi)
            grad += n * gi
            hess += n * hi
    return ll, grad, hess


def _newton(loglik, start, valid, max_iter=100, tol=1e-10):
    """Damped Newton ascent with step halving; returns (params, ll, grad, hess, converged, it)."""
    x = start.copy()
    ll, g, H = loglik(x)
    for it in range(1, max_iter + 1):
        try:
            step = np.linalg.solve(-H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(-H, g, rcond=None)[0]
        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            cand = x + t * step
            if valid(cand):
                ll_new, g_new, H_new = loglik(cand)
                if ll_new >= ll - 1e-12 * abs(ll):
                    break
            t /= 2
        else:
            return x, ll, g, H, False, it
        dll = abs(ll_new - ll) / (abs(ll_new) + 0.1)
        x, ll, g, H = cand, ll_new, g_new, H_new
        if np.max(np.abs(t * step)) < tol or np.max(np.abs(g)) < 1e-9 or dll < tol:
            return x, ll, g, H, True, it
    return x, ll, g, H, False, max_iter


def fit_prop_odds(scores, groups, group_names: Sequence[str] | None = None, k: int | None = None) -> FitResult:
    """Proportional-odds (cumulative logit) model with a group factor.

    Parametrized as ``logit P(Y <= j | g) = theta_j - beta_g`` with the
    control effect fixed at zero, so positive ``beta`` means a shift towards
    higher grades.
    """
    levels, counts = _counts(scores, groups, k)
    k, J = counts.shape
    if J < 2:
        raise FitError("need at least two observed grade levels")
    if np.any(counts.sum(axis=1) == 0):
        raise FitError("empty group")
    cum = np.cumsum(counts.sum(axis=0))[:-1] / counts.sum()
    start = np.concatenate([np.log(cum / (1 - cum)), np.zeros(k - 1)])

    def valid(x):
        return bool(np.all(np.diff(x[: J - 1]) > 0))

    x, ll, g, H, converged, it = _newton(
        lambda p: prop_odds_loglik(p, counts, derivatives=True), start, valid
    )
    cov_full = _safe_inverse(-H)
    names_g = list(group_names) if group_names is not None else [str(i + 1) for i in range(k)]
    bnames = tuple(names_g[1:])
    beta = x[J - 1 :]
    cov = cov_full[J - 1 :, J - 1 :]
    warns, flagged = _flag_separation(bnames, beta, np.sqrt(np.clip(np.diag(cov), 0, None)))
    if not converged:
        warns.append("Newton iterations did not converge")
    theta_names = [f"{levels[j]}|{levels[j + 1]}" for j in range(J - 1)]
    return FitResult(
        bnames, beta, cov, None, 1.0, converged, it, ll, warns, flagged,
        group_params=(None,) + tuple(range(k - 1)),
        intercepts={"names": theta_names, "coef": x[: J - 1], "cov": cov_full[: J - 1, : J - 1],
                    "full_cov": cov_full, "gradient": g},
    )


# ------------------------------------------------------------------ #
# Baseline-category multinomial logit
# ------------------------------------------------------------------ #


def multinomial_loglik(B: np.ndarray, X: np.ndarray, Y: np.ndarray, ref: int, derivatives=False):
    """Log-likelihood of ``log(pi_j / pi_ref) = x' B_j`` for count rows ``Y``.

    ``B`` is ``p x (J-1)`` with columns for the non-reference categories in
    order; the flattened parameter order is column-major (category blocks).
    """
    n, J = Y.shape
    other = [j for j in range(J) if j != ref]
    eta = np.zeros((n, J))
    eta[:, other] = X @ B
    eta -= eta.max(axis=1, keepdims=True)
    logpi = eta - np.log(np.exp(eta).sum(axis=1, keepdims=True))
    ll = float((Y * logpi).sum())
    if not derivatives:
        return ll
    pi = np.exp(logpi)
    N = Y.sum(axis=1)
    resid = Y[:, other] - N[:, None] * pi[:, other]
    grad = (X.T @ resid).ravel(order="F")
    p = X.shape[1]
    m = len(other)
    hess = np.zeros((p * m, p * m))
    po = pi[:, other]
    for a in range(m):
        for b in range(m):
            w = N * (po[:, a] * ((a == b) - po[:, b]))
            hess[a * p:(a + 1) * p, b * p:(b + 1) * p] = -(X.T * w) @ X
    return ll, grad, hess


def fit_multinomial(
    scores,
    groups,
    ref_level=None,
    group_names: Sequence[str] | None = None,
    k: int | None = None,
    dispersion: float = 1.0,
    max_iter: int = 50,
    tol: float = 1e-10,
) -> FitResult:
    """Baseline-category logit model with a treatment-coded group factor.

    Coefficients are labelled ``"C<j>/C<ref>: (Intercept)"`` and
    ``"C<j>/C<ref>: <g> - <control>"``.
    """
    levels, counts = _counts(scores, groups, k)
    k, J = counts.shape
    if J < 2:
        raise FitError("need at least two observed categories")
    ref = 0 if ref_level is None else int(np.flatnonzero(levels == ref_level)[0])
    X = group_design(np.arange(k), k, intercept=True)
    other = [j for j in range(J) if j != ref]
    p = X.shape[1]
    # start from mildly smoothed saturated estimates
    sm = counts + 0.5
    start = np.zeros((p, len(other)))
    for a, j in enumerate(other):
        lr = np.log(sm[:, j] / sm[:, ref])
        start[0, a] = lr[0]
        start[1:, a] = lr[1:] - lr[0]
    shape = start.shape

    def loglik(v):
        return multinomial_loglik(v.reshape(shape, order="F"), X, counts, ref, derivatives=True)

    x, ll, g, H, converged, it = _newton(loglik, start.ravel(order="F"), lambda v: True,
                                         max_iter=max_iter, tol=tol)
    cov = dispersion * _safe_inverse(-H)
    names_g = list(group_names) if group_names is not None else [str(i + 1) for i in range(k)]
    names = []
    for j in other:
        tag = f"C{levels[j]}/C{levels[ref]}"
        names.append(f"{tag}: (Intercept)")
        names.extend(f"{tag}: {names_g[gi]} - {names_g[0]}" for gi in range(1, k))
    names = tuple(names)
    warns, flagged = _flag_separation(names, x, np.sqrt(np.clip(np.diag(cov), 0, None)))
    if not converged:
        warns.append(f"Newton iterations did not converge in {max_iter} iterations")
    return FitResult(names, x, cov, None, dispersion, converged, it, ll, warns, flagged,
                     intercepts={"levels": levels, "ref": levels[ref], "gradient": g})


# ------------------------------------------------------------------ #
# Intervals
# ------------------------------------------------------------------ #


@dataclass
class WaldInterval:
    name: str
    estimate: float
    lower: float
    upper: float
    degenerate: bool = False


def wald_ci_bonferroni(
    fit: FitResult,
    level: float = 0.95,
    m: int = 1,
    exponentiate: bool = False,
    names: Sequence[str] | None = None,
) -> list[WaldInterval]:
    """Two-sided Wald intervals at Bonferroni level ``1 - (1 - level) / m``."""
    fit.require_converged()
    if m < 1:
        raise ValueError("m must be >= 1")
    z = float(ndtri(1 - (1 - level) / (2 * m)))
    out = []
    for name in names or fit.names:
        i = fit.index(name)
        b, s = float(fit.coef[i]), float(fit.se[i])
        lo, hi = b - z * s, b + z * s
        if exponentiate:
            b, lo, hi = np.exp(b), np.exp(lo), np.exp(hi)
        out.append(WaldInterval(name, float(b), float(lo), float(hi), degenerate=s == 0))
    return out
