"""Permutation max(max) test over contrasts x binarized endpoints.

The test statistic is the linear statistic ``T = sum_i g_i h_i'`` where
``g_i`` is the contrast-transformed group indicator of subject ``i`` and
``h_i`` its endpoint vector.  Its mean and covariance under random
relabelling of groups are known in closed form, so every component is
standardized and the maximum over all components is referred to its
permutation distribution.  Single-step adjusted p-values follow from the
tail of that maximum.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations

import numpy as np
from scipy.special import gammaln

from .contrasts import ContrastMatrix
from .tabular import BinarizedMatrix, Dataset

ALTERNATIVES = ("greater", "less", "two-sided")
EXACT_THRESHOLD = 2_000_000
DEFAULT_B = 10_000
EPS_VAR = 1e-12
BLOCK_SIZE = 2048
TOO_LARGE = "too large"


class NoTestableEndpoint(ValueError):
    pass


@dataclass
class LinearStatistic:
    """Linear statistic with its conditional (permutation) moments.

    ``T`` and ``mu`` are ``p x q`` (contrast rows x endpoints); ``sigma`` is
    the covariance of ``vec(T)`` with column-major vectorization, i.e. the
    component index is ``endpoint * p + row``.
    """

    T: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    degenerate: np.ndarray

    @property
    def sd(self) -> np.ndarray:
        d = np.clip(np.diag(self.sigma), 0.0, None)
        return np.sqrt(d).reshape(self.T.shape, order="F")

    @property
    def z(self) -> np.ndarray:
        return standardize(self.T, self.mu, self.sd, self.degenerate)


def conditional_moments(g: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Permutation mean and covariance of ``T = sum_i g_i h_i'``.

    Returns ``mu`` as a ``p x q`` matrix and ``sigma`` as ``pq x pq`` for
    ``vec(T)`` (column-major).
    """
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    if h.ndim == 1:
        h = h[:, None]
    n = g.shape[0]
    if n < 2 or h.shape[0] != n:
        raise ValueError("need n >= 2 subjects with matching g and h")
    Eh = h.mean(axis=0)
    hc = h - Eh
    Vh = hc.T @ hc / n
    G = g.sum(axis=0)
    S = g.T @ g
    mu = np.outer(G, Eh)
    sigma = n / (n - 1) * np.kron(Vh, S) - 1.0 / (n - 1) * np.kron(Vh, np.outer(G, G))
    sigma = (sigma + sigma.T) / 2
    return mu, sigma


def _degenerate_mask(sigma: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    diag = np.diag(sigma)
    scale = diag.max() if diag.size else 0.0
    if scale <= 0:
        return np.ones(shape, dtype=bool)
    return (diag <= EPS_VAR * scale).reshape(shape, order="F")


def linear_statistic(g: np.ndarray, h: np.ndarray) -> LinearStatistic:
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    if h.ndim == 1:
        h = h[:, None]
    mu, sigma = conditional_moments(g, h)
    T = g.T @ h
    return LinearStatistic(T, mu, sigma, _degenerate_mask(sigma, T.shape))


def standardize(T, mu, sd, degenerate) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (T - mu) / sd
    return np.where(degenerate, np.nan, z)


def _orient(z: np.ndarray, alternative: str) -> np.ndarray:
    if alternative == "greater":
        return z
    if alternative == "less":
        return -z
    if alternative == "two-sided":
        return np.abs(z)
    raise ValueError(f"unknown alternative {alternative!r}")


def standardized_stats(ls: LinearStatistic, alternative: str = "greater") -> np.ndarray:
    """Standardized components oriented for the alternative; NaN where degenerate."""
    return _orient(ls.z, alternative)


def count_permutations(group_sizes, cap: int | None = None):
    """Number of distinct group-label arrangements, ``n! / prod(n_g!)``.

    With ``cap`` set, returns :data:`TOO_LARGE` as soon as the count
    exceeds it.
    """
    sizes = [int(s) for s in group_sizes]
    if min(sizes) < 1:
        raise ValueError("group sizes must be >= 1")
    total, count = 0, 1
    for s in sizes:
        for i in range(1, s + 1):
            total += 1
            count = count * total // i
            if cap is not None and count > cap:
                return TOO_LARGE
    return count


# ------------------------------------------------------------------ #
# Test assembly
# ------------------------------------------------------------------ #


@dataclass
class _Problem:
    labels: np.ndarray  # group index per subject, canonical order
    h: np.ndarray
    K: np.ndarray
    sizes: np.ndarray
    ls: LinearStatistic
    alternative: str

    @property
    def shape(self):
        return self.ls.T.shape


def _setup(d: Dataset, K: ContrastMatrix, Y, alternative: str) -> _Problem:
    if alternative not in ALTERNATIVES:
        raise ValueError(f"unknown alternative {alternative!r}")
    if d.k < 2:
        raise ValueError("at least two groups are required")
    if K.coef.shape[1] != d.k:
        raise ValueError("contrast matrix does not match the number of groups")
    h = np.asarray(Y.values if isinstance(Y, BinarizedMatrix) else Y, dtype=float)
    if h.ndim == 1:
        h = h[:, None]
    if h.shape[0] != d.n:
        raise ValueError("endpoint matrix is not aligned with the dataset")
    # canonical subject order makes results independent of input order
    order = np.lexsort(tuple(h.T[::-1]) + (d.group_index,))
    labels = d.group_index[order]
    h = h[order]
    g = K.coef.T[labels]
    ls = linear_statistic(g, h)
    if ls.degenerate.all():
        raise NoTestableEndpoint("no testable endpoint")
    return _Problem(labels, h, K.coef, d.group_sizes(), ls, alternative)


def _max_stats(S: np.ndarray, prob: _Problem) -> tuple[np.ndarray, np.ndarray]:
    """Per-arrangement oriented z components and their max.

    ``S`` holds group sums of ``h`` with shape ``(m, k, q)``.
    """
    T = np.einsum("pk,mkq->mpq", prob.K, S)
    z = _orient(standardize(T, prob.ls.mu, prob.ls.sd, prob.ls.degenerate), prob.alternative)
    z = np.where(prob.ls.degenerate, -np.inf, z)
    return z, z.reshape(z.shape[0], -1).max(axis=1)


def _ge(values: np.ndarray, threshold: np.ndarray) -> np.ndarray:
    """``values >= threshold`` with a relative tolerance for rounding ties."""
    tol = 1e-9 * np.maximum(1.0, np.abs(threshold))
    return values[..., None] >= (threshold - tol)[None, ...]


@dataclass
class ExactDistribution:
    """Null distribution of the max statistic over all distinct arrangements."""

    max_values: np.ndarray
    probs: np.ndarray
    components: np.ndarray  # oriented z per arrangement, (m, p, q)
    n_arrangements: int

    def tail(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        hits = _ge(self.max_values, z.ravel())
        return (self.probs @ hits).reshape(z.shape)

    def marginal_tail(self, z: np.ndarray) -> np.ndarray:
        tol = 1e-9 * np.maximum(1.0, np.abs(z))
        hits = self.components >= (z - tol)[None]
        return np.einsum("m,mpq->pq", self.probs, hits.astype(float))


@lru_cache(maxsize=256)
def _compositions(total: int, parts: int) -> np.ndarray:
    """All ways to write ``total`` as an ordered sum of ``parts`` nonnegative ints."""
    if parts == 1:
        return np.array([[total]], dtype=np.int64)
    out = []
    for bars in combinations(range(total + parts - 1), parts - 1):
        prev, row = -1, []
        for b in bars:
            row.append(b - prev - 1)
            prev = b
        row.append(total + parts - 2 - prev)
        out.append(row)
    return np.array(out, dtype=np.int64)


def _enumerate_tables(patterns: np.ndarray, counts: np.ndarray, sizes: np.ndarray):
    """Enumerate pattern-by-group count tables with fixed margins.

    Yields the group sums of ``h`` and the log multiplicity of every
    distinct table; subjects sharing an endpoint pattern are exchangeable,
    so each table stands for ``prod_p c_p! / prod_{p,g} n_pg!`` label
    arrangements.
    """
    k = sizes.size
    q = patterns.shape[1]
    cap = sizes[None, :].astype(np.int64)
    S = np.zeros((1, k, q))
    logw = np.zeros(1)
    for idx, (u, c) in enumerate(zip(patterns, counts)):
        if idx == len(counts) - 1:
            comp = cap  # last pattern fills every remaining slot
            S = S + comp[:, :, None] * u[None, None, :]
            logw = logw - gammaln(comp + 1).sum(axis=1)
            break
        comps = _compositions(int(c), k)
        new_cap, new_S, new_w = [], [], []
        chunk = max(1, 4_000_000 // max(1, comps.shape[0] * k))
        for lo in range(0, cap.shape[0], chunk):
            cp = cap[lo : lo + chunk]
            ok = (comps[None, :, :] <= cp[:, None, :]).all(axis=2)
            si, ci = np.nonzero(ok)
            chosen = comps[ci]
            new_cap.append(cp[si] - chosen)
            new_S.append(S[lo : lo + chunk][si] + chosen[:, :, None] * u[None, None, :])
            new_w.append(logw[lo : lo + chunk][si] - gammaln(chosen + 1).sum(axis=1))
        cap = np.concatenate(new_cap)
        S = np.concatenate(new_S)
        logw = np.concatenate(new_w)
    logw = logw + gammaln(counts + 1).sum() + gammaln(sizes + 1).sum() - gammaln(sizes.sum() + 1)
    return S, logw


def _exact(prob: _Problem, threshold: int) -> ExactDistribution:
    n_arr = count_permutations(prob.sizes, cap=threshold)
    if n_arr == TOO_LARGE:
        raise ValueError(f"exact enumeration exceeds the threshold of {threshold} arrangements")
    patterns, inverse = np.unique(prob.h, axis=0, return_inverse=True)
    counts = np.bincount(inverse.ravel(), minlength=patterns.shape[0])
    S, logw = _enumerate_tables(patterns, counts, prob.sizes.astype(np.int64))
    probs = np.exp(logw)
    probs /= probs.sum()
    comps, mx = _max_stats(S, prob)
    return ExactDistribution(mx, probs, comps, int(n_arr))


def exact_distribution(
    d: Dataset,
    K: ContrastMatrix,
    Y,
    alternative: str = "greater",
    threshold: int = EXACT_THRESHOLD,
) -> ExactDistribution:
    return _exact(_setup(d, K, Y, alternative), threshold)


def _block_seed(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def _mc_block(prob: _Problem, seed: int, block: int, size: int):
    rng = _block_seed(seed, block)
    perm = rng.permuted(np.broadcast_to(prob.labels, (size, prob.labels.size)), axis=1)
    k = prob.sizes.size
    S = np.stack([(perm == g).astype(float) @ prob.h for g in range(k)], axis=1)
    return _max_stats(S, prob)


def _monte_carlo(prob: _Problem, B: int, seed: int, threads: int):
    blocks = [(b, min(BLOCK_SIZE, B - b * BLOCK_SIZE)) for b in range(-(-B // BLOCK_SIZE))]
    z_obs = _orient(prob.ls.z, prob.alternative)
    thr = np.where(prob.ls.degenerate, 0.0, z_obs)

    def run(block):
        comps, mx = _mc_block(prob, seed, *block)
        tol = 1e-9 * np.maximum(1.0, np.abs(thr))
        return _ge(mx, thr.ravel()).sum(axis=0), (comps >= (thr - tol)[None]).sum(axis=0)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    max_hits = sum(p[0] for p in parts).reshape(thr.shape)
    raw_hits = sum(p[1] for p in parts)
    return (1 + max_hits) / (B + 1), (1 + raw_hits) / (B + 1)


@dataclass
class PermutationResult:
    contrast_labels: tuple[str, ...]
    endpoint_labels: tuple[str, ...]
    estimate: np.ndarray
    T: np.ndarray
    mu: np.ndarray
    sd: np.ndarray
    z: np.ndarray
    raw_p: np.ndarray
    adjusted_p: np.ndarray
    degenerate: np.ndarray
    alternative: str
    mode: str
    B: int | None
    seed: int | None
    n_arrangements: int | str
    warnings: list[str] = field(default_factory=list)

    def rows(self):
        """Flattened hypotheses, contrast-major."""
        for i, c in enumerate(self.contrast_labels):
            for j, e in enumerate(self.endpoint_labels):
                yield {
                    "contrast": c,
                    "endpoint": e,
                    "estimate": float(self.estimate[i, j]),
                    "statistic": None if self.degenerate[i, j] else float(self.z[i, j]),
                    "raw_p": float(self.raw_p[i, j]),
                    "adjusted_p": float(self.adjusted_p[i, j]),
                    "degenerate": bool(self.degenerate[i, j]),
                }


def maxmax_test(
    d: Dataset,
    K: ContrastMatrix,
    Y,
    alternative: str = "greater",
    B: int = DEFAULT_B,
    seed: int | None = None,
    mode: str = "auto",
    threshold: int = EXACT_THRESHOLD,
    threads: int = 1,
) -> PermutationResult:
    """Single-step max(max) permutation test.

    ``mode="auto"`` enumerates exactly when the number of distinct
    arrangements is at most ``threshold`` and otherwise draws ``B``
    label shuffles.  Monte Carlo p-values use the add-one estimator
    ``(1 + hits) / (B + 1)``.
    """
    if mode not in ("auto", "exact", "montecarlo"):
        raise ValueError(f"unknown mode {mode!r}")
    prob = _setup(d, K, Y, alternative)
    n_arr = count_permutations(prob.sizes, cap=threshold)
    if mode == "auto":
        mode = "montecarlo" if n_arr == TOO_LARGE else "exact"
    z_obs = _orient(prob.ls.z, alternative)
    warns = list(Y.warnings) if isinstance(Y, BinarizedMatrix) else []
    p, q = prob.shape
    ep_labels = Y.labels if isinstance(Y, BinarizedMatrix) else tuple(f"Y{j + 1}" for j in range(q))
    if prob.ls.degenerate.any():
        warns.append(f"{int(prob.ls.degenerate.sum())} component(s) with zero permutation variance excluded")

    if mode == "exact":
        dist = _exact(prob, threshold)
        thr = np.where(prob.ls.degenerate, 0.0, z_obs)
        adj = np.where(prob.ls.degenerate, 1.0, dist.tail(thr))
        raw = np.where(prob.ls.degenerate, 1.0, dist.marginal_tail(thr))
        B_used = None
    else:
        if B < 1:
            raise ValueError("B must be positive")
        if seed is None:
            seed = int(np.random.SeedSequence().entropy % (2**63))
        adj, raw = _monte_carlo(prob, int(B), int(seed), max(1, int(threads)))
        adj = np.where(prob.ls.degenerate, 1.0, adj)
        raw = np.where(prob.ls.degenerate, 1.0, raw)
        B_used = int(B)

    means = np.stack([prob.h[prob.labels == g].mean(axis=0) for g in range(d.k)])
    return PermutationResult(
        contrast_labels=K.labels,
        endpoint_labels=tuple(ep_labels),
        estimate=K.coef @ means,
        T=prob.ls.T,
        mu=prob.ls.mu,
        sd=prob.ls.sd,
        z=z_obs,
        raw_p=np.minimum(raw, 1.0),
        adjusted_p=np.minimum(adj, 1.0),
        degenerate=prob.ls.degenerate,
        alternative=alternative,
        mode=mode,
        B=B_used,
        seed=seed if mode == "montecarlo" else None,
        n_arrangements=n_arr,
        warnings=warns,
    )


__all__ = [
    "ALTERNATIVES",
    "DEFAULT_B",
    "EXACT_THRESHOLD",
    "TOO_LARGE",
    "ExactDistribution",
    "LinearStatistic",
    "NoTestableEndpoint",
    "PermutationResult",
    "conditional_moments",
    "count_permutations",
    "exact_distribution",
    "linear_statistic",
    "maxmax_test",
    "standardized_stats",
]
