import json

from dualfuse.cli import EXIT_INPUT, EXIT_OK, main
from dualfuse.fileio import parse_epoch_log


def _cfg(tmp_path, extra=""):
    p = tmp_path / "run.cfg"
    p.write_text("duration = 15\nseed = 3\n" + extra)
    return str(p)


def test_simulate_fuse_report(tmp_path, capsys):
    cfg = _cfg(tmp_path)
    data = tmp_path / "data"
    assert main(["simulate", "--config", cfg, "--out", str(data)]) == EXIT_OK
    for name in ("imu.csv", "gps.csv", "truth.csv"):
        assert (data / name).is_file()
    out = tmp_path / "out"
    argv = ["fuse", "--config", cfg, "--imu", str(data / "imu.csv"), "--gps", str(data / "gps.csv")]
    argv += ["--truth", str(data / "truth.csv"), "--out", str(out)]
    assert main(argv) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["rmse_position"] < 0.1 and not summary["diverged"]
    cols = parse_epoch_log(out / "epochs.csv")
    assert len(cols["t"]) == summary["epochs"]
    rep = tmp_path / "rep"
    assert main(["report", str(out / "epochs.csv"), "--truth", str(data / "truth.csv"), "--out", str(rep)]) == EXIT_OK
    again = json.loads((rep / "report.json").read_text())
    assert again["rmse_position"] == summary["rmse_position"]


def test_simulate_is_deterministic(tmp_path):
    cfg = _cfg(tmp_path)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "b")]) == EXIT_OK
    for name in ("imu.csv", "gps.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert main(["simulate", "--config", cfg, "--seed", "4", "--out", str(tmp_path / "c")]) == EXIT_OK
    assert (tmp_path / "a" / "gps.csv").read_bytes() != (tmp_path / "c" / "gps.csv").read_bytes()


def test_analyze_observability(tmp_path, capsys):
    assert main(["analyze-observability", "--samples", "20", "--out", str(tmp_path)]) == EXIT_OK
    res = json.loads((tmp_path / "observability.json").read_text())
    assert res["rank_counts"] == {"12": 20}
    assert main(["analyze-observability", "--samples", "20", "--single-antenna", "1", "--out", str(tmp_path)]) == 0
    res = json.loads((tmp_path / "observability.json").read_text())
    assert set(res["rank_counts"]) <= {"9", "10", "11"}


def test_missing_input_exits_2(tmp_path, capsys):
    code = main(["fuse", "--imu", str(tmp_path / "nope.csv"), "--gps", "x.csv", "--out", str(tmp_path)])
    assert code == EXIT_INPUT
    assert "nope.csv" in capsys.readouterr().err


def test_bad_config_exits_2(tmp_path, capsys):
    assert main(["simulate", "--config", _cfg(tmp_path, "bogus = 1\n"), "--out", str(tmp_path)]) == EXIT_INPUT
    assert "bogus" in capsys.readouterr().err
