"""Serializable test report shared by the CLI and the simulation harness."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any

SCHEMA_VERSION = 1

HYPOTHESIS_FIELDS = (
    "contrast", "endpoint", "estimate", "se", "statistic", "raw_p", "adjusted_p",
    "lower", "upper", "degenerate", "separation",
)


@dataclass
class Hypothesis:
    contrast: str
    endpoint: str | None = None
    estimate: float | None = None
    se: float | None = None
    statistic: float | None = None
    raw_p: float | None = None
    adjusted_p: float | None = None
    lower: float | None = None
    upper: float | None = None
    degenerate: bool = False
    separation: bool = False

    @property
    def label(self) -> str:
        return self.contrast if self.endpoint is None else f"{self.contrast} | {self.endpoint}"


@dataclass
class TestReport:
    method: str
    hypotheses: list[Hypothesis]
    metadata: dict[str, Any] = field(default_factory=dict)

    __test__ = False  # not a pytest class

    @property
    def warnings(self) -> list[str]:
        return list(self.metadata.get("warnings", []))

    def adjusted(self) -> dict[str, float]:
        return {h.label: h.adjusted_p for h in self.hypotheses}

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "method": self.method,
            "hypotheses": [_encode(asdict(h)) for h in self.hypotheses],
            "metadata": _encode(self.metadata),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "TestReport":
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {data.get('schema_version')!r}")
        hyps = [Hypothesis(**_decode(h)) for h in data["hypotheses"]]
        return cls(data["method"], hyps, _decode(data.get("metadata", {})))

    @classmethod
    def from_json(cls, text: str) -> "TestReport":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HYPOTHESIS_FIELDS)
        for h in self.hypotheses:
            row = asdict(h)
            w.writerow(["" if row[k] is None else _fmt(row[k]) for k in HYPOTHESIS_FIELDS])
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return _encode(v) if not math.isfinite(v) else repr(v)
    return v


# JSON has no infinities; they travel as strings and NaN as null
def _encode(obj):
    if isinstance(obj, float):
        if math.isnan(obj):
            return None
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, dict):
        return {str(k): _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    return obj


def _decode(obj):
    if obj == "inf":
        return math.inf
    if obj == "-inf":
        return -math.inf
    if isinstance(obj, dict):
        return {k: _decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    return obj
