import json

import pytest

from sevtox.cli import main

from conftest import BASOPHILIA_TABLE


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_ft_dunnett(capsys):
    code, out, _ = run(capsys, "analyze", "--input", str(BASOPHILIA_TABLE), "--format", "table",
                       "--method", "ft-dunnett", "--seed", "1")
    assert code == 0
    rep = json.loads(out)
    assert [round(h["estimate"], 5) for h in rep["hypotheses"]] == [0.18475, 0.03458, 0.31374, 0.28239]
    assert rep["metadata"]["alternative"] == "greater"


def test_perm_csv_output(capsys):
    code, out, _ = run(capsys, "analyze", "--input", str(BASOPHILIA_TABLE), "--format", "table",
                       "--cutpoints", "1,2", "--nperm", "2000", "--seed", "1", "--output-format", "csv")
    assert code == 0
    assert len(out.strip().splitlines()) == 9


def test_missing_input(capsys, tmp_path):
    code, out, err = run(capsys, "analyze", "--input", str(tmp_path / "nope.csv"))
    assert code == 2 and out == "" and "cannot read" in err


def test_tukeytrend_needs_doses(capsys):
    code, out, _ = run(capsys, "analyze", "--input", str(BASOPHILIA_TABLE), "--format", "table",
                       "--method", "tukeytrend")
    assert code == 2 and out == ""


def test_tukeytrend_with_doses(capsys):
    code, out, _ = run(capsys, "analyze", "--input", str(BASOPHILIA_TABLE), "--format", "table",
                       "--method", "tukeytrend", "--doses", "0,10,25,50,150", "--seed", "2")
    assert code == 0
    assert len(json.loads(out)["hypotheses"]) == 6


def test_bad_cutpoint_is_usage_error(capsys):
    code, _, err = run(capsys, "analyze", "--input", str(BASOPHILIA_TABLE), "--format", "table", "--cutpoints", "3")
    assert code == 2


def test_parse_error_exit_2(capsys, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("group,1,2\na,1,-1\n")
    code, _, err = run(capsys, "analyze", "--input", str(bad), "--format", "table")
    assert code == 2 and "negative" in err


def test_method_failure_exit_1(capsys, tmp_path):
    flat = tmp_path / "flat.csv"
    flat.write_text("group,1,2\na,3,0\nb,3,0\n")
    code, out, err = run(capsys, "analyze", "--input", str(flat), "--format", "table")
    assert code == 1 and out == ""


def test_custom_contrast(capsys, tmp_path):
    cm = tmp_path / "k.csv"
    cm.write_text("top,-1,0,0,0,1\npool,-1,0,0,0.5,0.5\n")
    code, out, _ = run(capsys, "analyze", "--input", str(BASOPHILIA_TABLE), "--format", "table",
                       "--method", "glm-dunnett", "--contrast", f"custom={cm}", "--seed", "1")
    assert code == 0
    assert [h["contrast"] for h in json.loads(out)["hypotheses"]] == ["top", "pool"]


def test_control_flag(capsys):
    code, out, _ = run(capsys, "analyze", "--input", str(BASOPHILIA_TABLE), "--format", "table",
                       "--method", "ft-dunnett", "--control", "5", "--seed", "1")
    assert code == 0
    assert json.loads(out)["hypotheses"][0]["contrast"] == "1 - 5"


@pytest.mark.parametrize("argv", [
    ["analyze", "--input", "x", "--method", "nope"],
    ["tabulate", "--input", "x", "--from", "xml", "--to", "long"],
    ["frobnicate"],
])
def test_usage_errors(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


def test_tabulate_roundtrip(capsys, tmp_path):
    code, long_csv, _ = run(capsys, "tabulate", "--input", str(BASOPHILIA_TABLE), "--from", "table", "--to", "long")
    assert code == 0 and len(long_csv.strip().splitlines()) == 68
    path = tmp_path / "long.csv"
    path.write_text(long_csv)
    code, table_csv, _ = run(capsys, "tabulate", "--input", str(path), "--from", "long", "--to", "table")
    assert table_csv == BASOPHILIA_TABLE.read_text()


def test_simulate(capsys, tmp_path):
    cfg = tmp_path / "null.cfg"
    cfg.write_text("group_sizes = 4,4\ngrades = 0,1,2\nprobs = .5 .3 .2; .5 .3 .2\nnsim = 10\nseed = 1\nnperm = 199\n")
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["simulate", "--config", str(cfg), "--out", str(a), "--threads", "1"]) == 0
    assert main(["simulate", "--config", str(cfg), "--out", str(b), "--threads", "3"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert "replicate" in capsys.readouterr().err
    cfg.write_text(cfg.read_text().replace("nsim = 10", "nsim = 0"))
    assert main(["simulate", "--config", str(cfg)]) == 2


def test_seed_echoed_when_absent(capsys):
    code, out, _ = run(capsys, "analyze", "--input", str(BASOPHILIA_TABLE), "--format", "table",
                       "--method", "releff")
    assert isinstance(json.loads(out)["metadata"]["seed"], int)
