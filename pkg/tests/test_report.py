import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sevtox.analysis import analyze
from sevtox.report import Hypothesis, TestReport

from conftest import basophilia

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)
maybe = st.one_of(st.none(), finite, st.just(math.inf), st.just(-math.inf))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.text(min_size=1, max_size=5), maybe, maybe, maybe), max_size=5))
def test_json_roundtrip(rows):
    hyps = [Hypothesis(contrast=c, estimate=e, lower=lo, upper=hi) for c, e, lo, hi in rows]
    rep = TestReport("x", hyps, {"seed": 1, "warnings": ["w"]})
    again = TestReport.from_json(rep.to_json())
    assert again == rep


def test_schema_version_required():
    data = json.loads(TestReport("x", []).to_json())
    assert data["schema_version"] == 1
    data["schema_version"] = 99
    with pytest.raises(ValueError):
        TestReport.from_dict(data)


@pytest.mark.parametrize("method", ["ft-dunnett", "propodds-dunnett", "releff", "perm-maxmax"])
def test_reports_roundtrip_and_carry_metadata(method):
    rep = analyze(basophilia(), method, seed=3, nperm=500)
    again = TestReport.from_json(rep.to_json())
    assert again.to_json() == rep.to_json()
    assert rep.metadata["seed"] == 3
    assert "software_version" in rep.metadata
    assert rep.to_csv().splitlines()[0].startswith("contrast,endpoint,estimate")


def test_warnings_surface():
    rep = analyze(basophilia(), "multinomial-dunnett", seed=1)
    assert any("separation suspected" in w for w in rep.warnings)
    flagged = [h.label for h in rep.hypotheses if h.separation]
    assert flagged == ["C3/C1: 2 - 1", "C3/C1: 3 - 1"]
