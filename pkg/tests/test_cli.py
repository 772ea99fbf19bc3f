import csv
import io
import subprocess
import sys

import pytest

from swarmmap import cli, sim
from swarmmap.classes import default_classes
from swarmmap.ensemble import ensemble_accuracy
from swarmmap.metrics import MetricsFrame, write_trace


def _csv(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.txt"
    path.write_text("n_agents = 5\nn_objects = 12\nmin_votes = 2\n")
    return path


def test_ensemble_table(capsys):
    assert cli.main(["ensemble-table", "--n-max", "4"]) == 0
    rows = _csv(capsys.readouterr().out)
    assert len(rows) == 13 * 4
    chair = next(r for r in rows if r["class"] == "chair" and r["n"] == "3")
    assert float(chair["p_ens"]) == pytest.approx(ensemble_accuracy(3, 0.926, 13), abs=1e-12)


def test_ensemble_table_with_custom_classes(tmp_path, capsys):
    path = tmp_path / "classes.csv"
    path.write_text("class,p\ncat,0.9\ndog,0.6\n")
    assert cli.main(["ensemble-table", "--classes", str(path), "--n-max", "2"]) == 0
    rows = _csv(capsys.readouterr().out)
    assert [r["class"] for r in rows] == ["cat", "cat", "dog", "dog"]


def test_simulate_writes_outputs(tmp_path, small_config):
    out = tmp_path / "run"
    code = cli.main(["simulate", "--config", str(small_config), "--seed", "4", "--steps", "150", "--out", str(out), "--audit"])
    assert code == 0
    for name in ("trace.csv", "config.txt", "scene.txt", "final_map.csv", "consolidations.csv"):
        assert (out / name).exists()
    assert "seed = 4" in (out / "config.txt").read_text()
    assert "audit = True" in (out / "config.txt").read_text()


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "--steps", "10"],
        ["simulate", "--steps", "ten", "--out", "x"],
        ["frobnicate"],
        ["ensemble-table", "--n-max", "0"],
        ["ensemble-table", "--classes", "/nonexistent.csv"],
        ["binpack-audit", "--trace", "/nonexistent/trace.csv", "--capacity", "10"],
        ["report", "--runs", "/nonexistent/runs"],
    ],
)
def test_input_errors_exit_one(argv):
    with pytest.raises(SystemExit) as exc:
        sys.exit(cli.main(argv))
    assert exc.value.code == 1


def test_bad_config_file_exits_one(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("n_agents = 3\nwarp_speed = 9\n")
    assert cli.main(["simulate", "--config", str(path), "--steps", "5", "--out", str(tmp_path / "o")]) == 1


def test_invariant_violation_exits_two(tmp_path, monkeypatch):
    def broken(self):
        raise sim.InvariantViolation("tuple 7 held twice")

    monkeypatch.setattr(sim.World, "step", broken)
    assert cli.main(["simulate", "--steps", "5", "--out", str(tmp_path / "o")]) == 2


def _trace(path, realized):
    frame = MetricsFrame(0, 0.0, 0.0, None, 0, realized, [2, 2], [3, 0], [0, 0], [1, 1], [])
    write_trace([frame], path)


def test_binpack_audit_passes_on_simulated_trace(tmp_path, small_config, capsys):
    out = tmp_path / "run"
    assert cli.main(["simulate", "--config", str(small_config), "--steps", "100", "--out", str(out)]) == 0
    capsys.readouterr()
    code = cli.main(["binpack-audit", "--trace", str(out / "trace.csv"), "--stride", "10"])
    rows = _csv(capsys.readouterr().out)
    assert list(rows[0]) == ["step", "realized", "optimal", "worst"]
    assert len(rows) == 10
    assert all(float(r["optimal"]) <= float(r["realized"]) + 1e-9 for r in rows)
    assert code in (0, 2)


def test_binpack_audit_flags_impossible_cost(tmp_path, capsys):
    path = tmp_path / "trace.csv"
    # 3 tuples on one agent with 2 neighbors and capacity 10 cost 1/14; 0.001 is below any packing
    _trace(path, 0.001)
    assert cli.main(["binpack-audit", "--trace", str(path), "--capacity", "10"]) == 2
    _trace(path, 1 / 14)
    assert cli.main(["binpack-audit", "--trace", str(path), "--capacity", "10"]) == 0


def test_sweep_and_report(tmp_path, capsys):
    runs = tmp_path / "runs"
    code = cli.main(["sweep", "--agents", "3", "4", "--votes", "2", "--seeds", "2", "--steps", "120", "--out", str(runs)])
    assert code == 0
    assert (runs / "N4_V2" / "seed1" / "trace.csv").exists()
    capsys.readouterr()
    assert cli.main(["report", "--runs", str(runs), "--out", str(tmp_path / "rep"), "--stride", "20"]) == 0
    summary = _csv(capsys.readouterr().out)
    assert {(r["agents"], r["min_votes"], r["runs"]) for r in summary} == {("3", "2", "2"), ("4", "2", "2")}
    names = ("ensemble_accuracy", "coverage", "map_accuracy", "storage_cost", "nodeid_hash_histograms", "bandwidth")
    for name in names:
        assert (tmp_path / "rep" / f"{name}.csv").stat().st_size > 0
        assert (tmp_path / "rep" / f"{name}.png").read_bytes()[:4] == b"\x89PNG"
    cost = _csv((tmp_path / "rep" / "storage_cost.csv").read_text())
    assert {r["agents"] for r in cost} == {"3", "4"}


def test_report_without_plots(tmp_path):
    runs = tmp_path / "runs"
    assert cli.main(["sweep", "--agents", "3", "--votes", "1", "--seeds", "1", "--steps", "50", "--out", str(runs)]) == 0
    assert cli.main(["report", "--runs", str(runs), "--no-plots"]) == 0
    assert (runs / "coverage.csv").exists() and not (runs / "coverage.png").exists()


def test_module_entry_point():
    res = subprocess.run(
        [sys.executable, "-m", "swarmmap", "ensemble-table", "--n-max", "1"], capture_output=True, text=True
    )
    assert res.returncode == 0
    assert res.stdout.splitlines()[0] == "class,p,n,p_ens"
    assert len(res.stdout.splitlines()) == 1 + len(list(default_classes().ids))
