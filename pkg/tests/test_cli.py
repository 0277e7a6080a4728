import csv
from pathlib import Path

import pytest

from dhocbf.cli import main
from dhocbf.scenario_io import trace_header

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"

INFEASIBLE = """\
ego: {x_m: 0.0, y_m: 0.0, vx_mps: 4.0, vy_mps: 0.0}
filter: {policy: error}
obstacles:
  - shape: {kind: circle, radius_m: 1.0}
    position_m: [8.0, 0.0]
    segments: [{start_s: 0.0, velocity_mps: [-4.0, 0.0]}]
"""


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_preset_speed_sweep_outputs(tmp_path, capsys):
    assert main(["preset", "speed_sweep", "-o", str(tmp_path)]) == 0
    traces = sorted(p.name for p in tmp_path.glob("speed_sweep_v*_*.csv"))
    assert len(traces) == 6
    assert (tmp_path / "speed_sweep_summary.csv").exists()
    assert len(list(tmp_path.glob("*.csv"))) == 7
    assert len(list(tmp_path.glob("*.png"))) == 6
    rows = _rows(tmp_path / "speed_sweep_summary.csv")
    runs = [r for r in rows if r["record"] == "run"]
    checks = {r["check"]: r["passed"] for r in rows if r["record"] == "check"}
    assert {r["mode"] for r in runs} == {"hocbf", "dhocbf"} and len(runs) == 6
    assert checks["reduced_conservatism"] == "pass"
    assert all(v == "pass" for v in checks.values())
    with open(tmp_path / traces[0]) as fh:
        assert fh.readline().strip().split(",") == trace_header(1)
    assert "[PASS] reduced_conservatism" in capsys.readouterr().out


def test_preset_single_mode_without_figures(tmp_path):
    assert main(["preset", "radius_sweep", "--mode", "dhocbf", "--no-figures", "-o", str(tmp_path)]) == 0
    assert len(list(tmp_path.glob("radius_sweep_r*_dhocbf.csv"))) == 4
    assert not list(tmp_path.glob("*.png"))


def test_preset_files_are_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["preset", "perturbation", "--no-figures", "-o", str(a)]) == 0
    assert main(["preset", "perturbation", "--no-figures", "--jobs", "3", "-o", str(b)]) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()


def test_unknown_preset_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["preset", "nope", "-o", str(tmp_path)])
    assert exc.value.code == 2


def test_validate_usage_errors():
    for argv in (["validate", "--samples", "0"], ["validate", "--resolution", "-1"]):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 2


def test_validate_is_reproducible(tmp_path, capsys):
    assert main(["validate", "--samples", "60", "--seed", "7", "-o", str(tmp_path)]) == 0
    first = capsys.readouterr().out
    assert main(["validate", "--samples", "60", "--seed", "7", "-o", str(tmp_path)]) == 0
    assert capsys.readouterr().out == first
    assert first.strip().endswith("validate: PASS")


def test_run_writes_trace_summary_and_figures(tmp_path, capsys):
    assert main(["run", str(SCENARIO_DIR / "crossing_rectangles.yaml"), "-o", str(tmp_path)]) == 0
    assert (tmp_path / "crossing_rectangles.csv").exists()
    assert (tmp_path / "crossing_rectangles_distance.png").stat().st_size > 0
    assert (tmp_path / "crossing_rectangles_trajectory.png").stat().st_size > 0
    (row,) = _rows(tmp_path / "crossing_rectangles_summary.csv")
    assert row["n_relaxed"] == "0" and float(row["min_distance"]) > 0.2


def test_run_overrides(tmp_path):
    f = SCENARIO_DIR / "head_on_switch.yaml"
    assert main(["run", str(f), "--mode", "hocbf", "--dt", "0.05", "--no-figures", "-o", str(tmp_path)]) == 0
    (row,) = _rows(tmp_path / "head_on_switch_summary.csv")
    assert row["mode"] == "hocbf" and row["n_steps"] == "200"


def test_run_infeasible_under_error_policy(tmp_path, capsys):
    f = tmp_path / "bad.yaml"
    f.write_text(INFEASIBLE)
    assert main(["run", str(f), "--no-figures", "-o", str(tmp_path / "out")]) == 1
    assert "step 0" in capsys.readouterr().err


def test_run_invalid_scenario_is_usage_error(tmp_path, capsys):
    f = tmp_path / "bad.yaml"
    f.write_text("dt_s: -1\nego: {}\n")
    assert main(["run", str(f), "-o", str(tmp_path)]) == 2
    assert "dt_s" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.yaml"), "-o", str(tmp_path)]) == 2


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("DHOCBF_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["run", str(SCENARIO_DIR / "head_on_switch.yaml"), "--no-figures"]) == 0
    assert (tmp_path / "env" / "head_on_switch.csv").exists()


def test_sweep(tmp_path):
    argv = ["sweep", "--preset", "perturbation", "--beta1-values", "0.5,1", "--beta2-values", "1,2", "-o", str(tmp_path)]
    assert main(argv) == 0
    rows = _rows(tmp_path / "sweep.csv")
    assert len(rows) == 8
    assert {(r["beta1"], r["beta2"]) for r in rows} == {("0.5", "1"), ("0.5", "2"), ("1", "1"), ("1", "2")}
    with pytest.raises(SystemExit):
        main(["sweep", "--preset", "perturbation", "--beta1-values", "0,1"])


def test_metrics(tmp_path, capsys):
    assert main(["preset", "speed_sweep", "--mode", "dhocbf", "--no-figures", "-o", str(tmp_path)]) == 0
    capsys.readouterr()
    traces = sorted(str(p) for p in tmp_path.glob("speed_sweep_v*_dhocbf.csv"))
    out = tmp_path / "metrics.csv"
    assert main(["metrics", *traces, "--reference", traces[0], "-o", str(out)]) == 0
    (row,) = _rows(out)
    assert row["n_runs"] == "3" and row["sr"] == "1"
    assert float(row["ade"]) > 0
    assert capsys.readouterr().out.startswith("ade,fde,fde_penultimate,sr")
