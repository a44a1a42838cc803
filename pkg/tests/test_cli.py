import csv
import json

import numpy as np
import pytest

from regretcal.cli import main
from regretcal.dataset import save_csv
from regretcal.pipeline import expand_suite, pearson_r, worker_count
from regretcal.errors import ConfigError
from regretcal.synthetic import OracleDistribution, sample


def _data(tmp_path, o, n=20000, seed=0, name="data.csv"):
    path = tmp_path / name
    save_csv(sample(o, n, seed), path)
    return str(path)


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


CALIBRATED = OracleDistribution.from_atoms([0.25] * 4, [0.2, 0.4, 0.6, 0.8], [0.2, 0.4, 0.6, 0.8])
# raw score 0.4 hides c = 0.7; score 0.8 is calibrated
MISCALIBRATED = OracleDistribution.from_atoms([0.2, 0.8], [0.7, 0.8], [0.4, 0.8])
# each score level mixes two groups far apart
GROUPED = OracleDistribution.from_atoms([0.25] * 4, [0.1, 0.7, 0.3, 0.9], [0.4, 0.4, 0.6, 0.6], [0, 1, 2, 3])


def test_report_writes_four_files(tmp_path):
    rng = np.random.default_rng(0)
    lines = ["y,score"] + [f"{int(rng.random() < 0.5)},{rng.random()!r}" for _ in range(100)]
    (tmp_path / "in.csv").write_text("\n".join(lines) + "\n")
    out = tmp_path / "out"
    assert main(["report", "--input", str(tmp_path / "in.csv"), "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["bins.csv", "regret.svg", "reliability.svg", "report.json"]
    rep = json.loads((out / "report.json").read_text())
    assert rep["schema_version"] == 1
    assert rep["config"]["bins"] == 15 and len(rep["reports"]) == 11
    assert "brier" in rep["baseline_metrics"]
    assert rep["gl_available"] is False
    svg = (out / "regret.svg").read_text()
    assert svg.startswith("<?xml") and "<svg" in svg


def test_report_is_byte_identical_on_rerun(tmp_path):
    data = _data(tmp_path, GROUPED, n=3000)
    out = tmp_path / "out"
    args = ["report", "--input", data, "--out", str(out), "--tstar", "0.3,0.5", "--seed", "4"]
    assert main(args) == 0
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    assert main(args) == 0
    assert {p.name: p.read_bytes() for p in out.iterdir()} == first


def test_missing_score_column_exit_3(tmp_path, capsys):
    (tmp_path / "in.csv").write_text("y,p\n1,0.3\n")
    assert main(["report", "--input", str(tmp_path / "in.csv"), "--out", str(tmp_path)]) == 3
    assert "'score'" in capsys.readouterr().err


def test_config_errors_exit_2(tmp_path):
    data = _data(tmp_path, CALIBRATED, n=200)
    assert main(["report", "--input", data, "--tstar", "0,0.5", "--out", str(tmp_path)]) == 2
    assert main(["report", "--input", data, "--utility", "0,1,1,0", "--out", str(tmp_path)]) == 2
    assert main(["report", "--input", data, "--bins", "0", "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit) as err:
        main(["report", "--input", data, "--tstar", "0.5", "--utility", "1,0,0,1"])
    assert err.value.code == 2


def test_missing_input_file_exit_3(tmp_path):
    assert main(["report", "--input", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 3


def test_utility_flag(tmp_path):
    data = _data(tmp_path, CALIBRATED, n=500)
    out = tmp_path / "o"
    assert main(["report", "--input", data, "--utility", "1,0,0,19", "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert len(rep["reports"]) == 1
    assert rep["reports"][0]["t_star"] == pytest.approx(0.05)


def test_simulate_lower_tight(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"kind": "lower_tight", "c": 0.3, "v": 0.10, "t": 0.5}))
    out = tmp_path / "sim"
    assert main(["simulate", "--spec", str(spec), "--n", "500", "--seed", "1", "--out", str(out)]) == 0
    exact = json.loads((out / "exact.json").read_text())["exact"]
    assert exact["rgl"] == pytest.approx(0.04, abs=1e-12)
    assert exact["rcl"] == 0.0
    assert len((out / "data.csv").read_text().splitlines()) == 501
    assert len(json.loads((out / "oracle.json").read_text())["atoms"]) == 3


def test_simulate_errors(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"kind": "lower_tight", "c": 0.3, "v": 0.3, "t": 0.5}))
    assert main(["simulate", "--spec", str(spec), "--n", "10", "--out", str(tmp_path)]) == 2
    spec.write_text(json.dumps({"kind": "random", "n_levels": 3}))
    assert main(["simulate", "--spec", str(spec), "--n", "0", "--out", str(tmp_path)]) == 2


def test_posttrain_all_methods(tmp_path):
    data = _data(tmp_path, GROUPED, n=4000)
    for method in ("isotonic", "platt", "histogram", "threshold", "glar", "logistic"):
        out = tmp_path / method
        assert main(["posttrain", "--input", data, "--method", method, "--tstar", "0.25,0.5",
                     "--out", str(out)]) == 0
        rows = _read_csv(out / "gain.csv")
        assert [float(r["t_star"]) for r in rows] == [0.25, 0.5]
        for r in rows:
            assert float(r["gain"]) == pytest.approx(float(r["eu_after"]) - float(r["eu_before"]))
        rep = json.loads((out / "reports.json").read_text())
        assert rep["method"] == method and {"before", "after"} <= set(rep["results"][0])


def test_posttrain_glar_needs_features(tmp_path):
    (tmp_path / "in.csv").write_text("y,score\n" + "\n".join(f"{i % 2},{(i % 10) / 10}" for i in range(100)))
    assert main(["posttrain", "--input", str(tmp_path / "in.csv"), "--method", "glar",
                 "--out", str(tmp_path)]) == 3


def test_isotonic_gain_tracks_rcl(tmp_path):
    data = _data(tmp_path, MISCALIBRATED, n=20000, seed=3)
    out = tmp_path / "iso"
    assert main(["posttrain", "--input", data, "--method", "isotonic", "--tstar", "0.5",
                 "--out", str(out)]) == 0
    rep = json.loads((out / "reports.json").read_text())["results"][0]
    assert rep["gain"] == pytest.approx(rep["before"]["rcl_hat"], abs=0.03)
    assert rep["gain"] == pytest.approx(0.08, abs=0.03)


def test_glar_beats_isotonic_on_grouped_data(tmp_path):
    data = _data(tmp_path, GROUPED, n=20000, seed=5)
    gains = {}
    for method in ("isotonic", "glar"):
        out = tmp_path / method
        assert main(["posttrain", "--input", data, "--method", method, "--tstar", "0.5",
                     "--out", str(out)]) == 0
        gains[method] = float(_read_csv(out / "gain.csv")[0]["gain"])
    assert gains["glar"] > gains["isotonic"] + 0.05


def test_threshold_method_matches_isotonic_decisions(tmp_path):
    data = _data(tmp_path, MISCALIBRATED, n=5000, seed=2)
    cols = {}
    for method in ("isotonic", "threshold"):
        out = tmp_path / method
        assert main(["posttrain", "--input", data, "--method", method, "--tstar", "0.3,0.5,0.75",
                     "--out", str(out)]) == 0
        rows = _read_csv(out / "corrected.csv")
        cols[method] = [[r[k] for k in r if k.startswith("decision_")] for r in rows]
    assert cols["isotonic"] == cols["threshold"]


@pytest.mark.parametrize("oracle,verdict", [
    (CALIBRATED, "not_suboptimal"),
    (MISCALIBRATED, "recalibrate"),
    (GROUPED, "advanced_post_training"),
])
def test_advise_verdicts(tmp_path, capsys, oracle, verdict):
    data = _data(tmp_path, oracle, n=20000, seed=1)
    assert main(["advise", "--input", data, "--tstar", "0.5", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "advice.json").read_text())["verdict"] == verdict
    assert capsys.readouterr().out.startswith(verdict)


def test_sweep_small_suite(tmp_path, monkeypatch):
    monkeypatch.setenv("REGRETCAL_THREADS", "1")
    suite = tmp_path / "suite.json"
    suite.write_text(json.dumps({"n_runs": 4, "n": 2000, "seed": 0}))
    out = tmp_path / "sw"
    assert main(["sweep", "--suite", str(suite), "--out", str(out)]) == 0
    table = _read_csv(out / "correlations.csv")
    assert {(r["estimator"], r["method"]) for r in table} >= {("rcl_hat", "isotonic"), ("ece", "isotonic")}
    assert len(_read_csv(out / "scatter.csv")) == 4


def test_sweep_empty_suite(tmp_path):
    suite = tmp_path / "suite.json"
    suite.write_text(json.dumps({"runs": []}))
    assert main(["sweep", "--suite", str(suite), "--out", str(tmp_path)]) == 2


def test_worker_count(monkeypatch):
    monkeypatch.setenv("REGRETCAL_THREADS", "3")
    assert worker_count(10) == 3 and worker_count(2) == 2
    monkeypatch.setenv("REGRETCAL_THREADS", "zero")
    with pytest.raises(ConfigError):
        worker_count(4)


def test_expand_suite_and_pearson():
    runs = expand_suite({"n_runs": 3, "seed": 10, "t_star": [0.25, 0.5]})
    assert [r["seed"] for r in runs] == [10, 11, 12]
    assert [r["t_star"] for r in runs] == [0.25, 0.5, 0.25]
    assert pearson_r([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
