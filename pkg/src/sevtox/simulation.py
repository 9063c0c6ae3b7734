"""Monte Carlo error-rate and power estimation for small designs.

Config files are plain ``key = value`` text; ``#`` starts a comment.
Required keys::

    group_sizes = 5, 5, 5, 5
    grades      = 1, 2, 3
    probs       = 0.6 0.3 0.1; 0.6 0.3 0.1; 0.6 0.3 0.1; 0.6 0.3 0.1

``probs`` holds one row per group, rows separated by ``;``.  Optional keys:
``method`` (default perm-maxmax), ``contrast``, ``alternative``,
``cutpoints``, ``include_raw_score``, ``nperm``, ``exact``, ``doses``,
``alpha`` (0.05), ``nsim`` (1000), ``seed`` (1), ``groups`` (labels).
"""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .analysis import METHODS, analyze
from .permutation import NoTestableEndpoint
from .tabular import Dataset

DEGENERATE_POLICY = (
    "replicates where the method cannot produce a p-value are excluded from the "
    "denominator; other method failures count as non-rejections"
)


class ConfigError(ValueError):
    pass


@dataclass
class SimConfig:
    group_sizes: tuple[int, ...]
    grades: tuple[int, ...]
    probs: np.ndarray
    method: str = "perm-maxmax"
    params: dict[str, Any] = field(default_factory=dict)
    alpha: float = 0.05
    nsim: int = 1000
    seed: int = 1
    groups: tuple[str, ...] | None = None

    def __post_init__(self):
        self.probs = np.atleast_2d(np.asarray(self.probs, dtype=float))
        k = len(self.group_sizes)
        if k < 2:
            raise ConfigError("at least two groups required")
        if min(self.group_sizes) < 1:
            raise ConfigError("group sizes must be positive")
        if self.probs.shape != (k, len(self.grades)):
            raise ConfigError(f"probs must be {k} rows of {len(self.grades)} probabilities")
        if (self.probs < 0).any() or np.abs(self.probs.sum(axis=1) - 1).max() > 1e-9:
            raise ConfigError("each probability row must be nonnegative and sum to 1")
        if self.nsim < 1:
            raise ConfigError("nsim must be >= 1")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.groups is None:
            self.groups = tuple(str(i + 1) for i in range(k))
        if len(self.groups) != k:
            raise ConfigError("one label per group required")


def _ints(v: str) -> tuple[int, ...]:
    return tuple(int(x) for x in v.replace(",", " ").split())


def _floats(v: str) -> tuple[float, ...]:
    return tuple(float(x) for x in v.replace(",", " ").split())


def parse_config(text: str) -> SimConfig:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        raw[key] = value
    try:
        for key in ("group_sizes", "grades", "probs"):
            if key not in raw:
                raise ConfigError(f"missing key {key!r}")
        params: dict[str, Any] = {}
        for key in ("contrast", "alternative", "exact"):
            if key in raw:
                params[key] = raw[key]
        if "cutpoints" in raw:
            params["cutpoints"] = list(_ints(raw["cutpoints"]))
        if "doses" in raw:
            params["doses"] = list(_floats(raw["doses"]))
        if "nperm" in raw:
            params["nperm"] = int(raw["nperm"])
        if "include_raw_score" in raw:
            params["include_raw_score"] = raw["include_raw_score"].lower() in ("1", "true", "yes")
        unknown = set(raw) - {"group_sizes", "grades", "probs", "method", "alpha", "nsim", "seed",
                              "groups", "contrast", "alternative", "exact", "cutpoints", "doses",
                              "nperm", "include_raw_score"}
        if unknown:
            raise ConfigError(f"unknown key(s): {', '.join(sorted(unknown))}")
        return SimConfig(
            group_sizes=_ints(raw["group_sizes"]),
            grades=_ints(raw["grades"]),
            probs=[_floats(row) for row in raw["probs"].split(";") if row.strip()],
            method=raw.get("method", "perm-maxmax"),
            params=params,
            alpha=float(raw.get("alpha", 0.05)),
            nsim=int(raw.get("nsim", 1000)),
            seed=int(raw.get("seed", 1)),
            groups=tuple(s.strip() for s in raw["groups"].split(",")) if "groups" in raw else None,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _replicate_rng(seed: int, r: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r, stream)))


def simulate_dataset(cfg: SimConfig, replicate_index: int) -> Dataset:
    """Multinomial severities per group; deterministic in (seed, replicate_index)."""
    rng = _replicate_rng(cfg.seed, replicate_index, 0)
    gi, sev = [], []
    for g, (n, p) in enumerate(zip(cfg.group_sizes, cfg.probs)):
        counts = rng.multinomial(n, p)
        gi.extend([g] * n)
        sev.extend(np.repeat(cfg.grades, counts))
    doses = cfg.params.get("doses")
    return Dataset(cfg.groups, np.array(gi), np.array(sev), tuple(cfg.grades),
                   dict(zip(cfg.groups, map(float, doses))) if doses else None)


@dataclass
class SimReport:
    config: dict
    nsim: int
    n_valid: int
    failures: int
    degenerate: int
    alpha: float
    hypotheses: dict[str, dict[str, float]]
    familywise: dict[str, float]
    policy: str = DEGENERATE_POLICY
    failure_messages: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "nsim": self.nsim,
            "n_valid": self.n_valid,
            "failures": self.failures,
            "degenerate": self.degenerate,
            "alpha": self.alpha,
            "hypotheses": self.hypotheses,
            "familywise": self.familywise,
            "policy": self.policy,
            "failure_messages": self.failure_messages,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["hypothesis", "rejections", "proportion", "se"])
        for lab, h in self.hypotheses.items():
            w.writerow([lab, h["rejections"], repr(h["proportion"]), repr(h["se"])])
        fw = self.familywise
        w.writerow(["familywise", fw["rejections"], repr(fw["proportion"]), repr(fw["se"])])
        return buf.getvalue()


def _proportion(count: int, n: int) -> dict[str, float]:
    p = count / n if n else math.nan
    return {"rejections": count, "proportion": p,
            "se": math.sqrt(p * (1 - p) / n) if n else math.nan}


def _run_one(cfg: SimConfig, r: int):
    d = simulate_dataset(cfg, r)
    seed = int(np.random.SeedSequence(cfg.seed, spawn_key=(r, 1)).generate_state(1)[0])
    try:
        rep = analyze(d, cfg.method, seed=seed, alpha=cfg.alpha, **cfg.params)
    except NoTestableEndpoint:
        return "degenerate", None
    except Exception as exc:  # noqa: BLE001 - replicate failures are tallied, not fatal
        return "failure", f"replicate {r}: {type(exc).__name__}: {exc}"
    return "ok", {h.label: h.adjusted_p for h in rep.hypotheses}


def estimate_error_rates(cfg: SimConfig, threads: int = 1, progress=None) -> SimReport:
    """Rejection proportions per hypothesis and familywise over ``nsim`` replicates.

    Familywise rejection means any adjusted p <= alpha.  Results are
    aggregated in replicate order, so they do not depend on ``threads``.
    """
    def job(r):
        out = _run_one(cfg, r)
        if progress is not None:
            progress(r)
        return out

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(job, range(cfg.nsim)))
    else:
        outcomes = [job(r) for r in range(cfg.nsim)]

    labels: list[str] = []
    rejections: dict[str, int] = {}
    fw = failures = degenerate = valid = 0
    messages = []
    for status, payload in outcomes:
        if status == "degenerate":
            degenerate += 1
            continue
        valid += 1
        if status == "failure":
            failures += 1
            messages.append(payload)
            continue
        any_rej = False
        for lab, p in payload.items():
            if lab not in rejections:
                labels.append(lab)
                rejections[lab] = 0
            if p <= cfg.alpha:
                rejections[lab] += 1
                any_rej = True
        fw += any_rej
    return SimReport(
        config=config_dict(cfg),
        nsim=cfg.nsim,
        n_valid=valid,
        failures=failures,
        degenerate=degenerate,
        alpha=cfg.alpha,
        hypotheses={lab: _proportion(rejections[lab], valid) for lab in labels},
        familywise=_proportion(fw, valid),
        failure_messages=messages[:20],
    )


def config_dict(cfg: SimConfig) -> dict:
    return {
        "group_sizes": list(cfg.group_sizes),
        "grades": list(cfg.grades),
        "probs": cfg.probs.tolist(),
        "groups": list(cfg.groups),
        "method": cfg.method,
        "params": cfg.params,
        "alpha": cfg.alpha,
        "nsim": cfg.nsim,
        "seed": cfg.seed,
    }


def stderr_progress(total: int):
    step = max(1, total // 20)

    def report(r):
        if (r + 1) % step == 0:
            print(f"replicate {r + 1}/{total}", file=sys.stderr)

    return report
