import json

import numpy as np
import pytest

from iddoa.cli import main, read_snapshots

CONFIG = """\
scene:
  sources:
    - {theta_deg: -20, spread_deg: 1.5}
    - {theta_deg: 10, spread_deg: 1.5}
  snr_db: 6
sweep: {variable: snr_db, values: [0, 6]}
run: {trials: 2, seed: 4}
"""


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text(CONFIG)
    return str(path)


def test_simulate_and_round_trip(cfg, tmp_path, capsys):
    z = tmp_path / "z.csv"
    assert main(["simulate", "--config", cfg, "--out", str(z), "--snapshots", "30"]) == 0
    Z = read_snapshots(z, 16)
    assert Z.shape == (16, 30)

    fresh, loaded = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["estimate", "--config", cfg, "--out", str(fresh), "--snapshots", "30"]) == 0
    assert main(["estimate", "--config", cfg, "--out", str(loaded), "--input", str(z)]) == 0
    a, b = json.loads(fresh.read_text()), json.loads(loaded.read_text())
    a.pop("truth_deg")
    assert a == b
    assert len(a["stage2_doas_deg"]) == 2 and len(a["gain_est"]) == 16


def test_simulate_json(cfg, tmp_path):
    out = tmp_path / "z.json"
    assert main(["simulate", "--config", cfg, "--out", str(out), "--format", "json",
                 "--snapshots", "5"]) == 0
    data = json.loads(out.read_text())
    assert np.array(data["real"]).shape == (16, 5)


def test_estimate_csv(cfg, tmp_path):
    out = tmp_path / "e.csv"
    assert main(["estimate", "--config", cfg, "--out", str(out), "--format", "csv"]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "estimator,index,doa_deg" and len(lines) == 5


def test_spectrum(cfg, tmp_path):
    out = tmp_path / "s.csv"
    assert main(["spectrum", "--config", cfg, "--out", str(out)]) == 0
    data = np.genfromtxt(out, delimiter=",", names=True)
    assert data.dtype.names == ("angle_deg", "stage1", "stage2")
    assert data["stage1"].max() == 1.0 and data["stage2"].max() == 1.0


def test_sweep_threads_byte_identical(cfg, tmp_path):
    one, two = tmp_path / "1.csv", tmp_path / "2.csv"
    assert main(["sweep", "--config", cfg, "--out", str(one), "--threads", "1"]) == 0
    assert main(["sweep", "--config", cfg, "--out", str(two), "--threads", "2"]) == 0
    assert one.read_bytes() == two.read_bytes()
    assert len(one.read_text().splitlines()) == 1 + 4


def test_sweep_overrides(cfg, tmp_path):
    out = tmp_path / "t.json"
    assert main(["sweep", "--config", cfg, "--out", str(out), "--format", "json",
                 "--trials", "1", "--seed", "11"]) == 0
    rows = json.loads(out.read_text())["rows"]
    assert all(r["trials_used"] + r["failure_rate"] == 1 for r in rows)


@pytest.mark.parametrize("text, category, code", [
    ("scene: {sources: [{theta_deg: 1}]}\nbogus: 1\n", "config", 2),
    ("scene: {sources: [{theta_deg: 1}]}\narray: {num_sensors: 4, num_calibrated: 5}\n",
     "config", 2),
])
def test_config_errors(tmp_path, capsys, text, category, code):
    path = tmp_path / "bad.yaml"
    path.write_text(text)
    assert main(["sweep", "--config", str(path), "--out", str(tmp_path / "x.csv")]) == code
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == category and "bad.yaml" in err["message"]


def test_io_error(cfg, tmp_path, capsys):
    out = tmp_path / "no" / "such" / "dir.csv"
    assert main(["spectrum", "--config", cfg, "--out", str(out)]) == 6
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "io" and "dir.csv" in err["message"]


def test_bad_threads(cfg, tmp_path, capsys):
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "t.csv"),
                 "--threads", "0"]) == 3
    assert json.loads(capsys.readouterr().err)["error"] == "domain"


def test_bad_snapshot_file(cfg, tmp_path, capsys):
    bad = tmp_path / "z.csv"
    bad.write_text("a,b\n1,2\n")
    assert main(["estimate", "--config", cfg, "--out", str(tmp_path / "e.json"),
                 "--input", str(bad)]) == 3


def test_usage_error_exits_nonzero(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["sweep"])
    assert exc.value.code != 0
