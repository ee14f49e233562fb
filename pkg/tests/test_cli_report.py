import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from katolab.cli import main, run
from katolab.coefficients import GeneratorSpec
from katolab.config import SUITES, ConfigError, ExperimentConfig, parse_grid
from katolab.lattice import GridSpec
from katolab.report import dumps, emit, flatten, from_csv, loads, plot_data, to_csv, to_jsonable, unflatten
from katolab.suites import check, companion_grid, run_suite


# -- config ---------------------------------------------------------------------


def test_parse_grid():
    g = parse_grid("16x16x32")
    assert (g.n, g.Nx, g.Nt) == (2, 16, 32)
    assert parse_grid("8×8×8×16").n == 3
    for bad in ("16x8x32", "16", "axb", "12x12x32"):
        with pytest.raises(ConfigError):
            parse_grid(bad)


@given(
    seed=st.integers(0, 2**40),
    suites=st.lists(st.sampled_from(SUITES), unique=True),
    fam=st.sampled_from(["identity", "checkerboard", "log_singular", "time_modulated"]),
    mag=st.floats(0, 4, allow_nan=False),
    nx=st.sampled_from([8, 16, 32]),
)
def test_config_round_trip(seed, suites, fam, mag, nx):
    cfg = ExperimentConfig(
        grid=GridSpec(2, nx, 32), coefficients=GeneratorSpec(fam, mag, extra={"freq": 2}), suites=tuple(suites), seed=seed
    )
    back = ExperimentConfig.from_json(cfg.to_json())
    assert back == cfg
    assert back.to_json() == cfg.to_json()


@pytest.mark.parametrize(
    "doc",
    [
        {"suites": ["nope"]},
        {"suites": ["lp", "lp"]},
        {"grid": {"n": 2, "Nx": 12, "Nt": 32}},
        {"coefficients": {"family": "bogus"}},
        {"solver": {"rel_tol": 1.0}},
        {"colour": "red"},
        {"schema": "katolab.config/99"},
        {"seed": -1},
        [],
    ],
)
def test_config_rejects(doc):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(json.dumps(doc))


def test_config_rejects_bad_json():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json("{not json")


# -- checks -----------------------------------------------------------------------


def test_check_relations():
    assert check("a", 1.0, 1.0, "<=")["verdict"] == "pass"
    assert check("a", 1.1, 1.0, "<=", 0.05)["verdict"] == "fail"
    assert check("a", 0.99, 1.0, ">=", 0.02)["verdict"] == "pass"
    assert check("a", 0.0, 0.0, "<")["verdict"] == "fail"
    assert check("a", 1.15, 1.0, "rel", 0.2)["verdict"] == "pass"
    assert check("a", 1.25, 1.0, "rel", 0.2)["verdict"] == "fail"
    assert check("a", math.nan, 1.0, "<=", 10)["verdict"] == "fail"
    with pytest.raises(ValueError):
        check("a", 1, 1, "==")
    c = check("x", 1, 2, "<=", 0.5)
    assert set(c) == {"name", "lhs", "rhs", "relation", "tolerance", "verdict"}


def test_companion_grid():
    assert companion_grid(GridSpec(2, 16, 32)).Nx == 32
    assert companion_grid(GridSpec(2, 32, 32)).Nx == 16
    assert companion_grid(GridSpec(2, 32, 32)).Nt == 32


def test_suite_error_becomes_failure():
    # Nt = 4 is too short for the oracle-free heat check's refinement partner to matter;
    # a 1-d grid cannot carry an antisymmetric part, so generation raises inside the suite
    cfg = ExperimentConfig(grid=GridSpec(1, 16, 32), coefficients=GeneratorSpec("checkerboard", 1.0))
    res = run_suite("accretivity", cfg)
    assert res["passed"] is False
    assert res["error"]["type"] == "ValueError"


# -- serialization ------------------------------------------------------------------

text = st.text(alphabet=st.characters(blacklist_characters="\x00"), max_size=8)
json_leaf = st.one_of(
    st.none(),
    st.booleans(),
    st.integers(-(2**62), 2**62),
    st.floats(allow_nan=False, allow_infinity=False),
    text,
)
json_doc = st.recursive(
    json_leaf,
    lambda inner: st.one_of(st.lists(inner, max_size=4), st.dictionaries(text, inner, max_size=4)),
    max_leaves=30,
)


@given(json_doc)
@settings(max_examples=200)
def test_flatten_round_trip(doc):
    assert unflatten(flatten(doc)) == doc


@given(st.dictionaries(text, json_doc, max_size=5))
@settings(max_examples=100)
def test_csv_round_trip_is_exact(doc):
    back = from_csv(to_csv(doc))
    assert back == doc
    assert dumps(back) == dumps(doc)


def test_flatten_rejects_nul():
    with pytest.raises(ValueError):
        flatten({"a": "x\x00y"})


def test_to_jsonable_nonfinite_and_numpy():
    import numpy as np

    out = to_jsonable({"a": np.float64("nan"), "b": [np.int64(3), np.inf], "c": np.array([1.5, -np.inf]), "d": 1 + 2j})
    assert out == {"a": "nan", "b": [3, "inf"], "c": [1.5, "-inf"], "d": {"re": 1.0, "im": 2.0}}
    dumps(out)  # strict JSON


def test_empty_suite_list_gives_config_echo_only(tmp_path):
    cfg = ExperimentConfig(suites=(), output=str(tmp_path / "r"))
    report, timing = run(cfg)
    assert report["suites"] == [] and report["passed"] is True
    assert report["config"]["suites"] == []
    assert "workers" not in report["config"]
    paths = emit(report, cfg.output, timing=timing)
    names = sorted(p.name for p in paths)
    assert names == ["r.csv", "r.json", "r.plot.json", "r.timing.json"]
    assert from_csv((tmp_path / "r.csv").read_text()) == loads((tmp_path / "r.json").read_text())


def test_report_deterministic_and_round_trip(tmp_path):
    cfg = ExperimentConfig(grid=GridSpec(2, 8, 8), suites=("accretivity", "resolvent"), seed=3)
    a, _ = run(cfg)
    b, _ = run(cfg)
    assert dumps(a) == dumps(b)
    assert from_csv(to_csv(a)) == a
    for s in a["suites"]:
        for c in s["checks"]:
            assert {"lhs", "rhs", "tolerance", "verdict"} <= set(c)


def test_plot_data_has_series():
    rep = {
        "schema": "katolab.report/1",
        "suites": [{"name": "kato", "plot": {"kato_ratios/H": {"x": [0, 1, 2], "y": [0.5, 0.6, 0.7]}}}],
    }
    pd = plot_data(rep)
    assert "kato_ratios/H" in pd["series"]
    assert sum(pd["series"]["kato_ratios/H/histogram"]["y"]) == 3


# -- command line ------------------------------------------------------------------------


def test_cli_exit_codes(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("KATOLAB_WORKERS", raising=False)
    bad = tmp_path / "bad.json"
    bad.write_text('{"suites": ["nope"]}')
    assert main(["verify", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert main(["verify", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["verify", "--grid", "12x12x32", "--suite", "lp", "--out", str(tmp_path / "y")]) == 2
    with pytest.raises(SystemExit) as e:
        main(["verify", "--suite", "nope"])
    assert e.value.code == 2

    cfg = tmp_path / "ok.json"
    cfg.write_text(json.dumps({"suites": ["resolvent"], "grid": {"n": 2, "Nx": 8, "Nt": 8}}))
    out = tmp_path / "run"
    assert main(["verify", "--config", str(cfg), "--out", str(out), "--seed", "4"]) == 0
    rep = loads((tmp_path / "run.json").read_text())
    assert rep["config"]["seed"] == 4 and rep["passed"]
    # report subcommand re-emits from the flattened CSV
    assert main(["report", str(tmp_path / "run.csv"), "--out", str(tmp_path / "again")]) == 0
    assert (tmp_path / "again.json").read_text() == (tmp_path / "run.json").read_text()


def test_cli_failure_still_writes_report(tmp_path, monkeypatch):
    # a 1-d checkerboard cannot be generated: the suite fails, the report is written
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"suites": ["accretivity"], "grid": {"n": 1, "Nx": 16, "Nt": 16}, "coefficients": {"family": "checkerboard", "magnitude": 1.0}}))
    assert main(["verify", "--config", str(cfg), "--out", str(tmp_path / "f")]) == 1
    rep = loads((tmp_path / "f.json").read_text())
    assert rep["passed"] is False and rep["suites"][0]["error"] is not None


def test_serial_and_parallel_reports_identical(tmp_path, monkeypatch):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"suites": ["accretivity", "resolvent"], "grid": {"n": 2, "Nx": 8, "Nt": 8}}))
    monkeypatch.setenv("KATOLAB_WORKERS", "1")
    main(["verify", "--config", str(cfg), "--out", str(tmp_path / "s")])
    monkeypatch.setenv("KATOLAB_WORKERS", "2")
    main(["verify", "--config", str(cfg), "--out", str(tmp_path / "p")])
    assert (tmp_path / "s.json").read_bytes() == (tmp_path / "p.json").read_bytes()
    assert json.loads((tmp_path / "p.timing.json").read_text())["workers"] == 2
    monkeypatch.setenv("KATOLAB_WORKERS", "many")
    assert main(["verify", "--config", str(cfg), "--out", str(tmp_path / "q")]) == 2
