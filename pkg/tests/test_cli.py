import hashlib
import json

import pytest

from conftest import GOOD_4G, make_har
from streamqoe import pipeline
from streamqoe.cli import main
from streamqoe.dataset_store import load_csv

FIXTURES = __import__("pathlib").Path(__file__).parent / "fixtures"
GOOD_4G_SHA256 = "4e859f6bdd5f6b978f2c710a9fbb80bfc1972bd935841a79f6e9c86d4e893409"
FAST = ["--n-estimators", "40"]


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv(pipeline.ENV_OUTPUT_DIR, raising=False)
    monkeypatch.delenv(pipeline.ENV_EXTERNAL_SCORER, raising=False)
    (tmp_path / "good4g.txt").write_text(GOOD_4G)
    return tmp_path


@pytest.fixture
def trained(workdir):
    assert main(["synthesize", str(FIXTURES / "profiles.txt"), "-n", "30", "--seed", "3", "-o", "d.csv"]) == 0
    assert main(["train", "d.csv", "--seed", "3", "--output-dir", "out", *FAST]) == 0
    return workdir / "out"


def test_synthesize_golden_checksum(workdir):
    assert main(["synthesize", "good4g.txt", "-n", "10", "--seed", "7", "-o", "d.csv"]) == 0
    blob = (workdir / "d.csv").read_bytes()
    assert hashlib.sha256(blob).hexdigest() == GOOD_4G_SHA256
    recs = load_csv(workdir / "d.csv")
    assert len(recs) == 10 and {r.extras["profile"] for r in recs} == {"Good 4G"}
    assert all(r.stalling == "0 - 0" and r.rebuffering_ms == 0 for r in recs)


def test_synthesize_honours_output_dir_env(workdir, monkeypatch):
    monkeypatch.setenv(pipeline.ENV_OUTPUT_DIR, str(workdir / "env_out"))
    assert main(["synthesize", "good4g.txt", "-n", "2"]) == 0
    assert (workdir / "env_out" / "dataset.csv").is_file()


def test_train_artifacts(trained):
    names = sorted(p.name for p in trained.iterdir())
    assert names == ["comparison.csv", "metrics.json", "model_forest.bin", "model_linear.json"]
    metrics = json.loads((trained / "metrics.json").read_text())
    assert [m["model"] for m in metrics["models"]] == ["linear_regression_baseline", "random_forest_enhanced"]
    assert metrics["rows"]["train"] + metrics["rows"]["test"] == metrics["rows"]["retained"] == 120
    for m in metrics["models"]:
        assert m["rmse"] == pytest.approx(m["mse"] ** 0.5)
        assert set(m["normalized"]) >= {"mse", "rmse", "r2", "mae"}
    assert (trained / "comparison.csv").read_text().startswith("model,R2,MSE,RMSE,MAE\n")


def test_rerun_is_byte_identical(workdir):
    for out in ("a", "b"):
        assert main(["synthesize", str(FIXTURES / "profiles.txt"), "-n", "8", "--seed", "11",
                     "-o", f"{out}/d.csv"]) == 0
        assert main(["train", f"{out}/d.csv", "--seed", "11", "--output-dir", out, *FAST]) == 0
    for name in ("d.csv", "model_forest.bin", "model_linear.json", "metrics.json", "comparison.csv"):
        assert (workdir / "a" / name).read_bytes() == (workdir / "b" / name).read_bytes(), name


def test_predict_matches_in_process(trained, capsys):
    capsys.readouterr()
    args = ["--delay", "120", "--jitter", "30", "--loss", "1", "--bitrate", "410", "--throughput", "600000"]
    for name in ("model_forest.bin", "model_linear.json"):
        assert main(["predict", str(trained / name), *args]) == 0
        printed = float(capsys.readouterr().out.strip())
        model = pipeline.load_model(trained / name)
        expected = pipeline.predict_kpis(model, delay=120, jitter=30, packet_loss=1, bitrate=410,
                                         throughput=600000)
        assert printed == pytest.approx(expected, abs=5e-5)
        assert 1.0 <= printed <= 5.0


def test_predict_rejects_uncleanable_kpis(trained):
    args = ["--delay", "0", "--jitter", "3", "--loss", "0", "--bitrate", "400", "--throughput", "1"]
    assert main(["predict", str(trained / "model_forest.bin"), *args]) == 2


def test_plot_data_reproduces_reported_pairs(workdir, capsys):
    (workdir / "lr.json").write_text(json.dumps(
        {"model": "linear_regression", "r2": 0.6252, "mse": 2.8306e-05, "rmse": 0.0053, "mae": 0.0041}))
    (workdir / "rf.json").write_text(json.dumps(
        {"model": "random_forest", "r2": 0.9589, "mse": 3.1047e-06, "rmse": 0.0018, "mae": 0.0009}))
    capsys.readouterr()
    assert main(["plot-data", "lr.json", "rf.json"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines == ["model,R2,MSE,RMSE,MAE",
                     "linear_regression,0.6252,2.8306e-05,0.0053,0.0041",
                     "random_forest,0.9589,3.1047e-06,0.0018,0.0009"]


def test_plot_data_accepts_train_metrics(trained, workdir):
    assert main(["plot-data", str(trained / "metrics.json"), "-o", "table.csv"]) == 0
    assert (workdir / "table.csv").read_text() == (trained / "comparison.csv").read_text()


def test_ingest(workdir, capsys):
    har = make_har([{"url": f"https://c/seg{i}.ts", "start": s, "send": 1, "wait": 40, "receive": 100}
                    for i, s in enumerate([0, 500, 25000])])
    (workdir / "a.har").write_bytes(har)
    (workdir / "bad.har").write_text("{nope")
    capsys.readouterr()
    assert main(["ingest", "a.har", "--output-dir", "caps"]) == 0
    cap = json.loads((workdir / "caps" / "a.capture.json").read_text())
    assert cap["startup_ms"] == 141 and cap["stalls"] == [[20.0, 5.0]]
    assert main(["ingest", "a.har", "bad.har", "--output-dir", "caps"]) == 0
    assert main(["ingest", "bad.har", "--output-dir", "caps"]) == 1
    assert main(["ingest", "*.har", "--output-dir", "caps2"]) == 0


@pytest.mark.parametrize("argv", [
    ["train", "missing.csv"],
    ["ingest"],
    ["plot-data"],
    ["plot-data", "nothing.json"],
    ["synthesize", "missing.txt"],
    ["synthesize", "good4g.txt", "--segment-duration-ms", "400"],
    ["predict", "missing.bin", "--delay", "1", "--jitter", "1", "--loss", "0", "--bitrate", "1",
     "--throughput", "1"],
    ["frobnicate"],
    ["train", "d.csv", "--config", "bad.cfg"],
])
def test_usage_errors_exit_2(workdir, argv):
    (workdir / "bad.cfg").write_text("colour = blue\n")
    (workdir / "d.csv").write_text("mos\n")
    assert main(argv) == 2


def test_config_file_and_bad_profile(workdir):
    (workdir / "run.cfg").write_text("# small run\nseed = 5\nn_estimators = 10\noutput_dir = cfg_out\n")
    assert main(["synthesize", "good4g.txt", "-n", "6", "--config", "run.cfg"]) == 0
    assert (workdir / "cfg_out" / "dataset.csv").is_file()
    (workdir / "broken.txt").write_text("// X:\n-incoming\ndelay fast\n")
    assert main(["synthesize", "broken.txt"]) == 2


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
