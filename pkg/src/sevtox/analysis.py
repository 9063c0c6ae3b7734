"""Method dispatch: run one configured analysis on a dataset and build a report."""

from __future__ import annotations

import numpy as np

from . import __version__
from .contrasts import ContrastMatrix, make_contrasts
from .models import (
    fit_glm,
    fit_lm,
    fit_multinomial,
    fit_prop_odds,
    freeman_tukey,
    group_design,
)
from .permutation import DEFAULT_B, EXACT_THRESHOLD, maxmax_test
from .releff import releff_many_to_one
from .report import Hypothesis, TestReport
from .simultaneous import DEFAULT_TOL, group_linfct, max_t_adjust
from .tabular import Dataset, binarize
from .tukeytrend import tukey_trend_fit, tukey_trend_test

METHODS = (
    "perm-maxmax",
    "ft-dunnett",
    "glm-dunnett",
    "propodds-dunnett",
    "multinomial-dunnett",
    "releff",
    "tukeytrend",
)
EXACT_MODES = {"auto": "auto", "on": "exact", "off": "montecarlo"}


def new_seed() -> int:
    return int(np.random.SeedSequence().entropy % (2**32))


def _contrasts(d: Dataset, contrast) -> ContrastMatrix:
    if isinstance(contrast, ContrastMatrix):
        if contrast.coef.shape[1] != d.k:
            raise ValueError("custom contrast matrix does not match the number of groups")
        return contrast
    return make_contrasts(contrast, d.group_sizes(), d.groups)


def _sim_hypotheses(res, endpoint=None):
    return [
        Hypothesis(
            contrast=r["contrast"], endpoint=endpoint, estimate=r["estimate"], se=r["se"],
            statistic=r["statistic"], raw_p=r.get("raw_p"), adjusted_p=r["adjusted_p"],
            lower=r["lower"], upper=r["upper"], degenerate=r["degenerate"],
            separation=r.get("separation", False),
        )
        for r in res.rows()
    ]


def analyze(
    d: Dataset,
    method: str,
    contrast="dunnett",
    alternative: str = "greater",
    cutpoints=None,
    include_raw_score: bool = False,
    nperm: int = DEFAULT_B,
    seed: int | None = None,
    exact: str = "auto",
    alpha: float = 0.05,
    doses=None,
    threads: int = 1,
    tol: float = DEFAULT_TOL,
    exact_threshold: int = EXACT_THRESHOLD,
) -> TestReport:
    """Run ``method`` on ``d`` and collect every hypothesis into a report."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    if seed is None:
        seed = new_seed()
    level = 1 - alpha
    warnings = list(d.warnings)
    meta = {
        "alternative": alternative,
        "alpha": alpha,
        "seed": int(seed),
        "groups": list(d.groups),
        "group_sizes": [int(n) for n in d.group_sizes()],
        "software_version": __version__,
        "integration_tol": tol,
    }

    if method == "perm-maxmax":
        K = _contrasts(d, contrast)
        Y = binarize(d, cutpoints)
        if include_raw_score:
            Y = Y.with_raw_score(d)
        res = maxmax_test(d, K, Y, alternative=alternative, B=nperm, seed=seed,
                          mode=EXACT_MODES[exact], threshold=exact_threshold, threads=threads)
        hyps = [
            Hypothesis(contrast=r["contrast"], endpoint=r["endpoint"], estimate=r["estimate"],
                       statistic=r["statistic"], raw_p=r["raw_p"], adjusted_p=r["adjusted_p"],
                       degenerate=r["degenerate"])
            for r in res.rows()
        ]
        warnings += res.warnings
        meta.update(contrast=K.kind, cutpoints=list(Y.cutpoints), mode=res.mode, B=res.B,
                    n_arrangements=res.n_arrangements if isinstance(res.n_arrangements, int) else None)
    elif method == "releff":
        if not isinstance(contrast, str) or contrast not in ("dunnett", "williams"):
            raise ValueError("releff supports dunnett or williams contrasts only")
        res = releff_many_to_one(d, contrast, alternative, level, seed=seed, tol=tol)
        hyps = _sim_hypotheses(res)
        warnings += res.warnings
        meta.update(contrast=contrast, df=res.df, level=level)
    elif method == "tukeytrend":
        if doses is None and d.doses is None:
            raise ValueError("tukeytrend needs quantitative doses")
        Y = binarize(d, cutpoints)
        stack = tukey_trend_fit(d, Y, doses=doses, include_raw_score=include_raw_score)
        res = tukey_trend_test(stack, alternative, level, seed=seed, tol=tol)
        hyps = _sim_hypotheses(res)
        for h in hyps:
            endpoint, _, scaling = h.contrast.rpartition(".")
            h.contrast, h.endpoint = scaling, endpoint
        warnings += res.warnings
        meta.update(doses=[float(x) for x in (doses if doses is not None else d.group_doses())],
                    level=level, df=None)
    else:
        K = _contrasts(d, contrast)
        res = _parametric(d, method, K, alternative, level, seed, tol)
        hyps = _sim_hypotheses(res)
        warnings += res.warnings
        meta.update(contrast=K.kind, df=res.df, level=level, quantile=res.quantile,
                    integration_error=res.error)
    meta["warnings"] = list(dict.fromkeys(warnings))
    return TestReport(method, hyps, meta)


def _parametric(d: Dataset, method: str, K: ContrastMatrix, alternative, level, seed, tol):
    kw = dict(alternative=alternative, level=level, seed=seed, tol=tol)
    if method == "ft-dunnett":
        X = group_design(d.group_index, d.k)
        fit = fit_lm(X, freeman_tukey(d.severity), names=d.groups)
        return max_t_adjust(fit, K, **kw)
    if method == "glm-dunnett":
        X = group_design(d.group_index, d.k)
        fit = fit_glm(X, d.severity, "quasipoisson", names=d.groups)
        return max_t_adjust(fit, K, **kw)
    if method == "propodds-dunnett":
        fit = fit_prop_odds(d.severity, d.group_index, d.groups, k=d.k)
        return max_t_adjust(fit, group_linfct(fit, K), labels=K.labels, **kw)
    if method == "multinomial-dunnett":
        fit = fit_multinomial(d.severity, d.group_index, group_names=d.groups, k=d.k)
        blocks = len(fit.names) // d.k
        L, labels = [], []
        for b in range(blocks):
            tag = fit.names[b * d.k].split(":")[0]
            for row, lab in zip(K.coef, K.labels):
                v = np.zeros(len(fit.names))
                # treatment coding: control effect is the implicit zero
                v[b * d.k + 1 : (b + 1) * d.k] = row[1:]
                L.append(v)
                labels.append(f"{tag}: {lab}")
        return max_t_adjust(fit, np.array(L), labels=labels, **kw)
    raise ValueError(f"unknown method {method!r}")
