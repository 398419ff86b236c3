import csv
import json

import pytest

from wbanima import experiments
from wbanima.cli import main
from wbanima.scenario import ConfigError, bundled_config, hall_scenario

DEMO = str(bundled_config("demo"))
HALL = str(bundled_config("hall"))


def rows_of(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_run_writes_metrics_and_summary(tmp_path, capsys):
    out = tmp_path / "r"
    assert main(["run", "--config", DEMO, "--seed", "42", "--out", str(out)]) == 0
    names = {p.name for p in out.iterdir()}
    assert {"summary.txt", "report.json", "sop_wban0.csv", "residual_energy_wban0.csv",
            "outage_wban0.csv"} <= names
    summary = (out / "summary.txt").read_text()
    assert "SoP" in summary and "AVGRE" in summary and "outage" in summary
    assert json.loads((out / "report.json").read_text())["seed"] == 42
    assert summary == capsys.readouterr().out


def test_missing_config_exits_2(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2
    assert "not found" in capsys.readouterr().err


def test_unknown_key_reports_its_line(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{\n  "seed": 1,\n  "wbans": [],\n  "colour": "red"\n}\n')
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "line 4" in capsys.readouterr().err


def test_invalid_json_reports_its_line(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{\n  "seed": 1,\n  "wbans": [\n}\n')
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "line 4" in capsys.readouterr().err


def test_unwritable_output_exits_3(tmp_path):
    blocker = tmp_path / "taken"
    blocker.write_text("")
    assert main(["run", "--config", DEMO, "--duration", "1", "--out", str(blocker)]) == 3


def test_duration_override_ends_series(tmp_path):
    out = tmp_path / "r"
    assert main(["run", "--config", DEMO, "--duration", "1", "--out", str(out)]) == 0
    rows = rows_of(out / "sop_wban0.csv")
    assert rows[0] == ["time_s", "wban", "value"]
    assert float(rows[-1][0]) == 1.0


def test_same_invocation_same_bytes(tmp_path):
    for name in ("a", "b"):
        assert main(["run", "--config", DEMO, "--duration", "20", "--out",
                     str(tmp_path / name)]) == 0
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_compare_single_seed_single_row(tmp_path):
    before = open(HALL, "rb").read()
    out = tmp_path / "c"
    assert main(["compare", "--config", HALL, "--seeds", "1", "--duration", "20",
                 "--out", str(out)]) == 0
    rows = rows_of(out / "comparison.csv")
    assert rows[0][0] == "seed" and "sop_ratio" in rows[0]
    assert len(rows) == 2 and rows[1][0] == "42"
    assert open(HALL, "rb").read() == before


def test_compare_means_row(tmp_path):
    out = tmp_path / "c"
    assert main(["compare", "--config", DEMO, "--seeds", "2", "--duration", "15",
                 "--out", str(out)]) == 0
    rows = rows_of(out / "comparison.csv")
    assert [r[0] for r in rows[1:]] == ["1", "2", "mean"]


def test_loss_free_compare_ratio_near_one():
    sc = experiments.apply_overrides(
        hall_scenario(duration=30.0), {"channel.shadowing_sigma_db": 0.0})
    sc = sc.replace(wbans=sc.wbans[:1])
    rows = experiments.compare(sc, seeds_count=2)
    means = experiments.comparison_means(rows)
    assert means["sop_ratio"] == pytest.approx(1.0, abs=0.1)


def test_sweep_over_sensor_counts(tmp_path):
    out = tmp_path / "s"
    assert main(["sweep", "--config", HALL, "--seeds", "1", "--duration", "10",
                 "--param", "wbans.0.sensor_count=2,4,8", "--out", str(out)]) == 0
    rows = rows_of(out / "sweep.csv")
    assert rows[0][0] == "wbans.0.sensor_count"
    assert [r[0] for r in rows[1:]] == ["2", "4", "8"]


def test_empty_grid_behaves_as_compare(tmp_path):
    sc = hall_scenario(duration=10.0)
    (point,) = experiments.sweep(sc, {}, seeds_count=1)
    assert point["point"] == {}
    assert point["rows"] == experiments.compare(sc, seeds_count=1)


def test_unknown_sweep_path_exits_2(tmp_path, capsys):
    assert main(["sweep", "--config", HALL, "--seeds", "1", "--param", "protocol.nope=1",
                 "--out", str(tmp_path)]) == 2
    assert "protocol.nope" in capsys.readouterr().err
    with pytest.raises(ConfigError):
        experiments.apply_overrides(hall_scenario(), {"wbans.9.uses_ima": True})


def test_diff_margin_sweep_pool_sizes_grow():
    sc = hall_scenario(duration=100.0)
    results = experiments.sweep(sc, {"protocol.diff_margin": [5.0, 10.0, 20.0]}, seeds_count=2)
    assert len(results) == 3
    pools = [r["means"]["mean_candidate_pool_with"] for r in results]
    assert pools[0] < pools[1] < pools[2]
