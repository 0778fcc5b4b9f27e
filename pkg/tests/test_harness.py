import json

import numpy as np
import pytest

import checks
from conftest import SCENARIOS
from mrfabrics import load_scenario, parse_scenario, run
from mrfabrics.harness import TrajectoryLog, batch, bench_horizon, summarize, write_outputs

SHORT = """
t_max 1.0
params
  damping 3
end
robot left
  base -0.6 0.0 0.0
  links 0.4 0.35 0.25
  start 1.748187 -1.440681 -1.930314
  goal 0.05 0.45
end
robot right
  base 0.6 0.0 3.141592653589793
  links 0.4 0.35 0.25
  start -1.748187 1.440681 1.930314
  goal -0.05 0.45
end
"""


def test_single_robot_in_free_space_succeeds():
    sc = load_scenario(SCENARIOS / "single_robot.scn")
    m, traj = run(sc, "mrdf")
    assert m.success and m.success_rate == 1.0 and not m.collision and m.failure is None
    assert m.time_to_success is not None and m.time_to_success == pytest.approx(m.sim_time)
    # nothing to collide with, so there is no clearance to report
    assert m.min_clearance is None
    assert len(traj) == round(m.sim_time / 0.01)


def test_head_on_without_resolution_stays_deadlocked():
    m = checks.head_on("mrdf")
    assert not m.success and m.success_rate < 1.0
    assert m.deadlocked_at_end and m.deadlock_events == [] and not m.collision
    assert m.sim_time == pytest.approx(70.0)


def test_head_on_with_resolution_succeeds():
    m = checks.head_on("rf")
    assert m.success and not m.collision and len(m.deadlock_events) >= 1
    assert m.min_clearance > 0
    ev = m.deadlock_events[0]
    assert set(ev.robots) == {0, 1} and ev.released_at is not None and ev.released_at > ev.time


def test_head_on_resolution_is_live_across_tie_seeds():
    sc = load_scenario(SCENARIOS / "head_on.scn")
    results = [run(sc.with_overrides(mode="rf", seed=s), record=False)[0] for s in range(10)]
    assert all(m.success and not m.collision for m in results)


def test_unsuccessful_runs_exclude_time_and_clearance():
    m = checks.head_on("mrdf")
    assert m.time_to_success is None and m.min_clearance is None
    s = summarize([m, checks.head_on("rf")])
    assert s["success"] == (0.5, 0.5)
    assert s["time_to_success"][1] == 0.0


def test_replay_reproduces_logged_states():
    m, traj = run(parse_scenario(SHORT), "rf")
    assert len(traj) == 100
    Q, QD = traj.replay()
    assert np.max(np.abs(Q - traj.q)) <= 1e-12 and np.max(np.abs(QD - traj.qd)) <= 1e-12


def test_runs_are_deterministic():
    sc = parse_scenario(SHORT)
    (a, ta), (b, tb) = run(sc, "rf"), run(sc, "rf")
    assert ta.q.tobytes() == tb.q.tobytes() and ta.qdd.tobytes() == tb.qdd.tobytes()
    assert a.success_rate == b.success_rate and a.sim_time == b.sim_time


def test_csv_round_trip(tmp_path):
    _, traj = run(parse_scenario(SHORT), "mrdf")
    path = tmp_path / "t.csv"
    traj.write_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "t,robot,q0,q1,q2,qd0,qd1,qd2,qdd0,qdd1,qdd2"
    back = TrajectoryLog.read_csv(path)
    for f in ("t", "q", "qd", "qdd", "dof"):
        np.testing.assert_array_equal(getattr(back, f), getattr(traj, f))


def test_csv_pads_mixed_joint_counts(tmp_path):
    text = SHORT.replace("links 0.4 0.35 0.25\n  start -1.748187 1.440681 1.930314",
                         "links 0.6 0.4\n  start -1.7 1.4")
    _, traj = run(parse_scenario(text), "mrdf")
    path = tmp_path / "t.csv"
    traj.write_csv(path)
    row = path.read_text().splitlines()[2].split(",")
    assert row[1] == "1" and row[4] == "" and row[7] == "" and row[10] == ""
    back = TrajectoryLog.read_csv(path)
    np.testing.assert_array_equal(back.dof, [3, 2])
    np.testing.assert_array_equal(back.q, traj.q)


def test_planner_failure_is_reported_not_raised():
    # twin arms on one base start inside each other
    text = SHORT.replace("base 0.6 0.0 3.141592653589793", "base -0.6 0.0 0.0").replace(
        "start -1.748187 1.440681 1.930314", "start 1.748187 -1.440681 -1.930314")
    m, traj = run(parse_scenario(text), "mrdf")
    assert m.failure and m.failure.startswith("GradientSingularity")
    assert not m.success and len(traj) == 0


def test_batch_of_one_has_zero_spread():
    sc = load_scenario(SCENARIOS / "single_robot.scn")
    res = batch(sc, 1, modes=("mrdf",))
    s = res.summary["mrdf"]
    assert s["runs"] == 1 and s["success"] == (1.0, 0.0) and s["time_to_success"][1] == 0.0
    assert "MRDF" in res.table()
    data = json.loads(res.to_json())
    assert data["runs"][0]["mode"] == "mrdf" and data["runs"][0]["success"] is True


def test_batch_draws_distinct_goals_per_seed():
    sc = load_scenario(SCENARIOS / "single_robot.scn")
    res = batch(sc.with_overrides(), 3, modes=("mrdf", "rf"))
    assert [r["seed"] for r in res.records] == [0, 1, 2, 0, 1, 2]
    with pytest.raises(ValueError):
        batch(sc, 0)


def test_bench_horizon_reports_every_horizon():
    sc = parse_scenario(SHORT)
    out = bench_horizon(sc, (5, 10), t_max=0.2)
    assert list(out) == [5, 10]
    assert all(0 < v["median_ms"] <= v["p95_ms"] for v in out.values())


def test_write_outputs(tmp_path):
    m, traj = run(parse_scenario(SHORT), "rf")
    write_outputs(tmp_path / "out", m, traj)
    assert (tmp_path / "out" / "trajectory.csv").exists()
    rec = json.loads((tmp_path / "out" / "metrics.json").read_text())
    assert rec["mode"] == "rf" and rec["goals_total"] == 2
