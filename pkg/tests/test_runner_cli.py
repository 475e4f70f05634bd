import json
import os
import subprocess
import sys

import pytest

from tamedcalc.cli import main
from tamedcalc.runner import (SCHEMA, ConfigError, ReportError, compare, config_from_mapping, load_report,
                              parse_config_text, report_body, run, summarize_families)
from tamedcalc.suites import list_suites


def _config(tmp_path, **overrides):
    keys = {"model.shape": "interval", "suites": "core", "refinement_ladder": "2, 3, 4",
            "output_dir": str(tmp_path / "out")}
    keys.update(overrides)
    path = tmp_path / "exp.conf"
    path.write_text("\n".join(f"{k} = {v}" for k, v in keys.items()) + "\n")
    return str(path)


@pytest.fixture(scope="module")
def interval_core(tmp_path_factory):
    d = tmp_path_factory.mktemp("core")
    cfg = config_from_mapping(parse_config_text(
        f"model.shape = interval\nsuites = core\nrefinement_ladder = 2, 3, 4\noutput_dir = {d / 'out'}\n"))
    return cfg, run(cfg, timestamp="t0")


# -- config ----------------------------------------------------------------------------

def test_parse_config_text_handles_comments_and_blank_lines():
    m = parse_config_text("# experiment\n\nmodel.shape = disk  # the unit disk\nseed = 4\n")
    assert m == {"model.shape": "disk", "seed": "4"}


@pytest.mark.parametrize("text,match", [
    ("model.shape disk", "expected 'key = value'"),
    ("= 3", "empty key"),
    ("seed = 1\nseed = 2", "duplicate"),
])
def test_parse_config_text_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config_text(text)


def test_config_keys_are_typed():
    cfg = config_from_mapping({"model.shape": "disk, sphere", "suites": "core, kato", "refinement_ladder": "1,2",
                               "seed": "7", "model.size": "2.0", "kappa.boundary": "auto",
                               "tolerance.core.leibniz": "1e-3", "suite.curvature.tolerance": "2.5",
                               "heat_flow.dense_max": "500"})
    assert cfg.shapes == ["disk", "sphere"] and cfg.ladder == [1, 2] and cfg.seed == 7
    assert cfg.size_params == (2.0,) and cfg.kappa_boundary is None
    assert cfg.tolerances == {"core.leibniz": 1e-3} and cfg.slack_constants == {"curvature": 2.5}
    assert cfg.dense_max == 500


@pytest.mark.parametrize("mapping,match", [
    ({"model.shape": "interval", "suites": "foo", "refinement_ladder": "1,2"}, "unknown suite"),
    ({"model.shape": "cube", "suites": "core", "refinement_ladder": "1"}, "unknown shape"),
    ({"model.shape": "interval", "suites": "core", "refinement_ladder": "2,2"}, "strictly increasing"),
    ({"model.shape": "interval", "suites": "core", "refinement_ladder": "a"}, "integer"),
    ({"model.shape": "interval", "suites": "core", "refinement_ladder": "1", "colour": "red"}, "unknown config key"),
    ({"model.shape": "interval", "suites": "core, core", "refinement_ladder": "1"}, "twice"),
])
def test_config_validation_errors(mapping, match):
    with pytest.raises(ConfigError, match=match):
        config_from_mapping(mapping)


def test_config_hash_depends_on_content():
    base = {"model.shape": "interval", "suites": "core", "refinement_ladder": "1,2"}
    a, b = config_from_mapping(base), config_from_mapping(dict(base, seed="1"))
    assert a.hash() == config_from_mapping(base).hash() != b.hash()


# -- runs and reports ---------------------------------------------------------------------

def test_interval_core_orders(interval_core):
    _, rep = interval_core
    fams = {f["family"]: f for f in rep["families"]}
    for name in ("gamma_leibniz", "gamma_chain", "laplacian_leibniz"):
        assert fams[name]["passed"], fams[name]
        orders = fams[name]["orders"] or []
        assert all(o is None or o >= 0.9 for o in orders)
    assert rep["summary"]["passed"]


def test_report_is_deterministic(interval_core):
    cfg, rep = interval_core
    again = run(cfg, write=False, timestamp="t1")
    assert report_body(again) == report_body(rep)
    assert again["provenance"]["config_hash"] == cfg.hash()


def test_run_writes_json_csv_and_plot_data(interval_core):
    cfg, rep = interval_core
    out = cfg.output_dir
    assert load_report(os.path.join(out, "report.json"))["schema"] == SCHEMA
    assert os.path.exists(os.path.join(out, "core.csv"))
    plots = os.listdir(os.path.join(out, "plot_data"))
    assert plots and all(p.startswith("core__") and p.endswith(".csv") for p in plots)
    with open(os.path.join(out, "plot_data", plots[0])) as fh:
        assert fh.readline().strip() == "shape,level,x_h,y_residual"


def test_orders_need_three_levels():
    entries = [{"suite": "core", "family": "r", "shape": "interval", "level": l, "h": h, "kind": "residual",
                "value": v, "tolerance": None, "passed": True} for l, h, v in ((1, 0.5, 1e-2), (2, 0.25, 5e-3))]
    fam = summarize_families(entries, 2)[0]
    assert not fam.get("orders")


# -- compare ---------------------------------------------------------------------------------

def test_compare_identical_reports_is_empty(interval_core):
    _, rep = interval_core
    diff = compare(rep, json.loads(json.dumps(rep)))
    assert diff["rows"] == [] and diff["regressions"] == 0


def test_compare_flags_added_levels_and_regressions(interval_core):
    _, rep = interval_core
    shorter = json.loads(json.dumps(rep))
    shorter["entries"] = [e for e in shorter["entries"] if e["level"] != 4]
    diff = compare(shorter, rep)
    assert diff["added"] > 0 and all(r["status"] == "added" for r in diff["rows"])

    worse = json.loads(json.dumps(rep))
    target = next(e for e in worse["entries"] if e["kind"] == "residual" and e["value"] > 1e-10)
    target["value"] *= 2
    rows = compare(rep, worse)["rows"]
    assert [r["status"] for r in rows] == ["regression"]


def test_compare_rejects_schema_mismatch(interval_core, tmp_path):
    _, rep = interval_core
    with pytest.raises(ReportError):
        compare(rep, dict(rep, schema="other/2"))
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(dict(rep, schema="other/2")))
    with pytest.raises(ReportError, match="schema"):
        load_report(str(p))


# -- command line -------------------------------------------------------------------------------

def test_list_suites_table(capsys):
    names = [n for n, _ in list_suites()]
    assert names == ["core", "first_order", "second_order", "curvature", "kato", "hodge", "flows"]
    desc = dict(list_suites())
    assert "Ricci" in desc["curvature"] and "II" in desc["curvature"]
    assert "Kato constant" in desc["kato"] and "form bounds" in desc["kato"]
    assert main(["list-suites"]) == 0
    assert len(capsys.readouterr().out.strip().splitlines()) == 7


def test_cli_unknown_suite_exits_with_usage_error(tmp_path, capsys):
    assert main(["run", _config(tmp_path, suites="foo")]) == 2
    assert "unknown suite" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_cli_missing_config_is_io_error(tmp_path):
    assert main(["run", str(tmp_path / "missing.conf")]) == 3


def test_cli_run_and_compare(tmp_path, capsys):
    cfg = _config(tmp_path, refinement_ladder="1, 2")
    assert main(["run", cfg, "--levels", "1,2,3", "--output-dir", str(tmp_path / "a")]) == 0
    out = capsys.readouterr().out
    assert "families passed" in out and "PASS" in out
    assert main(["run", cfg, "--output-dir", str(tmp_path / "b")]) == 0
    capsys.readouterr()
    a, b = str(tmp_path / "a" / "report.json"), str(tmp_path / "b" / "report.json")
    assert main(["compare", b, a]) == 0
    assert "added" in capsys.readouterr().out
    assert main(["compare", a, a]) == 0
    assert "0 changed rows" in capsys.readouterr().out


def test_cli_bad_levels_flag(tmp_path):
    assert main(["run", _config(tmp_path), "--levels", "3,2"]) == 2
    assert main(["run", _config(tmp_path), "--levels", "x"]) == 2


def test_console_script_module_entry(tmp_path):
    res = subprocess.run([sys.executable, "-m", "tamedcalc", "list-suites"], capture_output=True, text=True)
    assert res.returncode == 0 and "curvature" in res.stdout
