"""Rectangle probabilities of multivariate normal and t distributions.

Separation-of-variables transform with variable prioritization, integrated
by randomized rank-1 lattice rules (baker-transformed Richtmyer points
with independent random shifts).  The spread over shifts gives the error
estimate; the number of points doubles until the estimate meets the
requested tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincinv, ndtr, ndtri, stdtr

_PRIMES = np.array([2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61,
                    67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127, 131, 137,
                    139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193, 197, 199])
N_SHIFTS = 12
ERROR_FACTOR = 3.0
_U_EPS = 1e-15


@dataclass(frozen=True)
class MVProb:
    value: float
    error: float
    n_points: int
    converged: bool = True


class NotPSDError(ValueError):
    pass


def _check_corr(R: np.ndarray) -> np.ndarray:
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if R.shape[0] != R.shape[1]:
        raise ValueError("correlation matrix must be square")
    if not np.allclose(R, R.T, atol=1e-10):
        raise NotPSDError("matrix is not symmetric")
    lam = np.linalg.eigvalsh(R)
    if lam.min() < -1e-8 * max(1.0, np.abs(lam).max()):
        raise NotPSDError("matrix is not positive semidefinite")
    return (R + R.T) / 2


def _merge_duplicates(R, lower, upper):
    """Collapse perfectly (anti)correlated coordinates into one.

    A pair with correlation +1 is one variable with intersected bounds; with
    -1 the partner's bounds are mirrored first.  Returns reduced inputs and
    a flag that is False when the intersection is empty.
    """
    keep = []
    lo = lower.copy()
    hi = upper.copy()
    for i in range(R.shape[0]):
        for j in keep:
            if R[i, j] > 1 - 1e-12:
                lo[j], hi[j] = max(lo[j], lo[i]), min(hi[j], hi[i])
                break
            if R[i, j] < -1 + 1e-12:
                lo[j], hi[j] = max(lo[j], -hi[i]), min(hi[j], -lo[i])
                break
        else:
            keep.append(i)
    keep = np.array(keep)
    ok = bool(np.all(lo[keep] < hi[keep]))
    return R[np.ix_(keep, keep)], lo[keep], hi[keep], ok


def _prioritized_cholesky(R, lower, upper):
    """Cholesky factor with Genz-Bretz variable reordering.

    At each step the remaining variable with the smallest conditional
    interval probability goes next; conditioning uses truncated-normal
    means of the variables already placed.
    """
    m = R.shape[0]
    R = R.copy()
    a = lower.copy()
    b = upper.copy()
    L = np.zeros((m, m))
    y = np.zeros(m)
    for i in range(m):
        best, best_p = i, np.inf
        for j in range(i, m):
            var = R[j, j] - L[j, :i] @ L[j, :i]
            den = np.sqrt(max(var, 1e-20))
            s = L[j, :i] @ y[:i]
            p = ndtr((b[j] - s) / den) - ndtr((a[j] - s) / den)
            if p < best_p:
                best, best_p = j, p
        if best != i:
            for arr in (a, b):
                arr[[i, best]] = arr[[best, i]]
            R[[i, best]] = R[[best, i]]
            R[:, [i, best]] = R[:, [best, i]]
            L[[i, best]] = L[[best, i]]
        var = R[i, i] - L[i, :i] @ L[i, :i]
        L[i, i] = np.sqrt(max(var, 1e-20))
        for j in range(i + 1, m):
            L[j, i] = (R[j, i] - L[j, :i] @ L[i, :i]) / L[i, i]
        s = L[i, :i] @ y[:i]
        lo = (a[i] - s) / L[i, i]
        hi = (b[i] - s) / L[i, i]
        mass = ndtr(hi) - ndtr(lo)
        if mass > 1e-300:
            y[i] = (_phi(lo) - _phi(hi)) / mass
        else:
            y[i] = lo if np.isfinite(lo) else hi
    return L, a, b


def _phi(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / np.sqrt(2 * np.pi)


def _integrand(w, L, a, b, df):
    """Separation-of-variables integrand at points ``w`` in the unit cube."""
    npts = w.shape[0]
    m = L.shape[0]
    col = 0
    if df is None:
        scale = np.ones(npts)
    else:
        chi = 2.0 * gammaincinv(df / 2.0, np.clip(w[:, 0], _U_EPS, 1 - _U_EPS))
        scale = np.sqrt(chi / df)
        col = 1
    f = np.ones(npts)
    y = np.zeros((npts, m))
    for i in range(m):
        s = y[:, :i] @ L[i, :i]
        d = ndtr((a[i] * scale - s) / L[i, i])
        e = ndtr((b[i] * scale - s) / L[i, i])
        f = f * np.clip(e - d, 0.0, None)
        if i < m - 1:
            u = d + w[:, col] * (e - d)
            y[:, i] = ndtri(np.clip(u, _U_EPS, 1 - _U_EPS))
            col += 1
    return f


def mv_rectangle_prob(
    R,
    lower,
    upper,
    df: float | None = None,
    tol: float = 1e-4,
    seed: int = 0,
    max_points: int = 2_000_000,
) -> MVProb:
    """``P(lower <= X <= upper)`` for ``X ~ N(0, R)`` or multivariate t.

    ``df=None`` (or ``inf``) selects the normal distribution.  Bounds may
    be infinite.  The result is deterministic for a fixed ``seed``.
    """
    R = _check_corr(R)
    m = R.shape[0]
    lower = np.broadcast_to(np.asarray(lower, dtype=float), (m,)).copy()
    upper = np.broadcast_to(np.asarray(upper, dtype=float), (m,)).copy()
    if np.any(lower >= upper):
        raise ValueError("lower must be below upper componentwise")
    if df is not None and not np.isfinite(df):
        df = None
    sd = np.sqrt(np.diag(R))
    if np.any(sd <= 0):
        raise ValueError("zero-variance coordinate")
    R = R / np.outer(sd, sd)
    lower, upper = lower / sd, upper / sd
    R, lower, upper, ok = _merge_duplicates(R, lower, upper)
    if not ok:
        return MVProb(0.0, 0.0, 0)
    m = R.shape[0]
    if m == 1:
        cdf = ndtr if df is None else (lambda x: stdtr(df, x))
        return MVProb(float(cdf(upper[0]) - cdf(lower[0])), 0.0, 0)

    L, a, b = _prioritized_cholesky(R, lower, upper)
    ndim = m - 1 + (df is not None)
    gen = np.sqrt(_PRIMES[:ndim].astype(float)) % 1.0
    rng = np.random.default_rng(seed)
    n = 1024
    sums = np.zeros(N_SHIFTS)
    used = 0
    shifts = rng.random((N_SHIFTS, ndim))
    while True:
        # extend the same shifted point sets each round
        k = np.arange(used + 1, used + n + 1)[:, None]
        base = k * gen[None, :]
        for s in range(N_SHIFTS):
            w = np.abs(2.0 * ((base + shifts[s]) % 1.0) - 1.0)
            sums[s] += _integrand(w, L, a, b, df).sum()
        used += n
        total = used * N_SHIFTS
        means = sums / used
        est = float(means.mean())
        err = ERROR_FACTOR * float(means.std(ddof=1)) / np.sqrt(N_SHIFTS)
        if err <= tol:
            return MVProb(min(max(est, 0.0), 1.0), err, total)
        if total >= max_points:
            return MVProb(min(max(est, 0.0), 1.0), err, total, converged=False)
        n *= 2
