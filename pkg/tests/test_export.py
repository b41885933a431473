import json

import numpy as np
import pytest

from singular_cs.diagnostics import verify
from singular_cs.export import export, read_trajectory, trajectory_header, write_trajectory
from singular_cs.integrator import simulate
from singular_cs.scenarios import scenario_config


def test_single_particle_three_samples(tmp_path):
    t = np.array([0.0, 0.5, 1.0])
    X = (1 / 3 + t)[:, None, None]
    V = np.full((3, 1, 1), 1.0)
    write_trajectory(tmp_path / "trajectory.csv", t, X, V)
    lines = (tmp_path / "trajectory.csv").read_text().splitlines()
    assert len(lines) == 4
    assert lines[0] == "t,x_0_0,v_0_0"
    t2, X2, V2 = read_trajectory(tmp_path / "trajectory.csv")
    assert np.array_equal(t2, t) and np.array_equal(X2, X) and np.array_equal(V2, V)


def test_header_order():
    assert trajectory_header(2, 2) == ["t", "x_0_0", "x_0_1", "x_1_0", "x_1_1", "v_0_0", "v_0_1", "v_1_0", "v_1_1"]


@pytest.fixture(scope="module")
def exported(critical_run, tmp_path_factory):
    out = tmp_path_factory.mktemp("critical")
    export(critical_run, verify(critical_run), out)
    return out


def test_all_artifacts_written(exported):
    names = {p.name for p in exported.iterdir()}
    assert names == {"trajectory.csv", "events.jsonl", "diagnostics.csv", "report.json", "summary.json"}
    summary = json.loads((exported / "summary.json").read_text())
    assert summary["config"]["kernel"]["alpha"] == 0.5
    assert summary["build"]
    assert summary["passed"] is True
    header = (exported / "diagnostics.csv").read_text().splitlines()[0]
    assert header == "t,r,R,momentum_0,max_speed"


def test_critical_pair_one_sticking_line(exported):
    lines = (exported / "events.jsonl").read_text().splitlines()
    events = [json.loads(line) for line in lines]
    assert [e["kind"] for e in events] == ["sticking"]
    assert events[0]["members"] == [0, 1]
    assert events[0]["t"] == pytest.approx(1.0, abs=1e-3)


def test_trajectory_reparse_bitwise(exported, critical_run):
    t, X, V = read_trajectory(exported / "trajectory.csv")
    traj = critical_run.trajectory
    assert np.array_equal(t, traj.times)
    assert np.array_equal(X, traj.positions)
    assert np.array_equal(V, traj.velocities)


def test_deterministic_bytes(tmp_path):
    cfg = scenario_config("many-body", {"t_final": 1.0})
    for k in range(2):
        run = simulate(cfg)
        export(run, verify(run), tmp_path / str(k))
    for name in ("trajectory.csv", "events.jsonl", "diagnostics.csv", "report.json"):
        assert (tmp_path / "0" / name).read_bytes() == (tmp_path / "1" / name).read_bytes()


def test_unwritable_directory_reports_path(tmp_path, critical_run):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError) as info:
        export(critical_run, None, blocker / "sub")
    assert "file" in str(info.value)
