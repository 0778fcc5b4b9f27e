"""Simulation harness: run scenarios under MRDF, RF or RF-CV and collect metrics."""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import FabricError
from .multi_robot import Fleet
from .resolution import (ResolutionState, apply_resolution, assign_priority, check_release,
                         deadlock_groups, release)
from .rollout import Mode, estimate_goal, integrate, rollout_arrays
from .scenario import Scenario

log = logging.getLogger(__name__)


@dataclass
class DeadlockEvent:
    time: float
    robots: tuple
    priority: tuple
    released_at: float | None = None
    release_reason: str | None = None


@dataclass
class RunMetrics:
    """Outcome of one run.

    ``time_to_success`` and ``min_clearance`` are None unless every goal was reached;
    ``min_clearance`` is also None when there is nothing to collide with.
    """

    mode: str
    seed: int
    success_rate: float
    time_to_success: float | None
    collision: bool
    min_clearance: float | None
    compute_ms_median: float
    compute_ms_p95: float
    deadlock_events: list = field(default_factory=list)
    goals_reached: int = 0
    goals_total: int = 0
    sim_time: float = 0.0
    deadlocked_at_end: bool = False
    failure: str | None = None

    @property
    def success(self) -> bool:
        return self.failure is None and self.goals_reached == self.goals_total

    def as_record(self) -> dict:
        rec = asdict(self)
        rec["success"] = self.success
        rec["deadlock_events"] = [asdict(e) if isinstance(e, DeadlockEvent) else e
                                  for e in self.deadlock_events]
        return rec


@dataclass
class TrajectoryLog:
    """States and applied accelerations at every simulated step, padded to the widest robot."""

    t: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    dof: np.ndarray

    def __len__(self):
        return self.t.shape[0]

    def replay(self):
        """Re-integrate the logged accelerations from the first logged state."""
        Q, QD = self.q[0].copy(), self.qd[0].copy()
        dt = self.t[1] - self.t[0] if len(self) > 1 else 0.0
        outq, outqd = [Q], [QD]
        for k in range(len(self) - 1):
            Q, QD = integrate(Q, QD, self.qdd[k], dt)
            outq.append(Q)
            outqd.append(QD)
        return np.array(outq), np.array(outqd)

    def header(self):
        n = int(self.dof.max())
        return (["t", "robot"] + [f"q{j}" for j in range(n)] + [f"qd{j}" for j in range(n)]
                + [f"qdd{j}" for j in range(n)])

    def write_csv(self, path) -> None:
        n_max = int(self.dof.max())
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.header())
            for k in range(len(self)):
                for i, n in enumerate(self.dof):
                    pad = [""] * (n_max - n)
                    w.writerow([repr(float(self.t[k])), i]
                               + [repr(float(x)) for x in self.q[k, i, :n]] + pad
                               + [repr(float(x)) for x in self.qd[k, i, :n]] + pad
                               + [repr(float(x)) for x in self.qdd[k, i, :n]] + pad)

    @classmethod
    def read_csv(cls, path) -> "TrajectoryLog":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        n_max = (len(rows[0]) - 2) // 3
        body = rows[1:]
        robots = sorted({int(r[1]) for r in body})
        N = len(robots)
        T = len(body) // N
        t = np.zeros(T)
        q, qd, qdd = (np.zeros((T, N, n_max)) for _ in range(3))
        dof = np.zeros(N, dtype=np.int64)
        for idx, r in enumerate(body):
            k, i = divmod(idx, N)
            t[k] = float(r[0])
            vals = [np.nan if x == "" else float(x) for x in r[2:]]
            blocks = np.array(vals).reshape(3, n_max)
            dof[i] = int(np.sum(~np.isnan(blocks[0])))
            q[k, i], qd[k, i], qdd[k, i] = np.nan_to_num(blocks)
        return cls(t, q, qd, qdd, dof)


class _Mission:
    """Goal sequences, dwell clocks and the per-robot parameters without resolution."""

    def __init__(self, scenario: Scenario):
        self.robots = scenario.robots
        self.index = [0] * len(self.robots)
        self.dwell = [0.0] * len(self.robots)
        self.params = [r.params(r.goals[0].position) for r in self.robots]
        self.finished_at = None

    @property
    def total(self) -> int:
        return sum(len(r.goals) for r in self.robots)

    @property
    def reached(self) -> int:
        return sum(self.index)

    def done(self, i) -> bool:
        return self.index[i] >= len(self.robots[i].goals)

    def all_done(self) -> bool:
        return all(self.done(i) for i in range(len(self.robots)))

    def goals(self) -> np.ndarray:
        return np.array([p.goal for p in self.params])

    def at_goal(self, i, x) -> bool:
        return self.done(i) or np.linalg.norm(x - self.params[i].goal) < self.params[i].goal_tolerance

    def update(self, i, x, dt) -> bool:
        """Advance robot ``i``'s dwell clock; True when a goal was consumed."""
        if self.done(i):
            return False
        p = self.params[i]
        if np.linalg.norm(x - p.goal) >= p.goal_tolerance:
            self.dwell[i] = 0.0
            return False
        self.dwell[i] += dt
        if self.dwell[i] + 1e-9 < self.robots[i].goals[self.index[i]].dwell:
            return False
        self.index[i] += 1
        self.dwell[i] = 0.0
        if not self.done(i):
            self.params[i] = p.with_goal(self.robots[i].goals[self.index[i]].position)
        return True


def _ego_rollouts(fleet, Q, QD, X, V, packed, config):
    """RF-CV: one rollout per robot with peers' goals replaced by constant-velocity estimates."""
    N = len(fleet)
    v_bar = np.zeros(N)
    pairs = set()
    H = config.lookahead
    for i in range(N):
        goals = packed["goals"].copy()
        for p in range(N):
            if p != i:
                goals[p] = estimate_goal(X[p], V[p], H, config.dt)
        rr = rollout_arrays(fleet, Q, QD, dict(packed, goals=goals), config)
        v_bar[i] = rr.v_bar[i]
        pairs.update(pr for pr in rr.deadlock_pairs if i in pr)
    return v_bar, sorted(pairs)


class _StalePeers:
    """Peer states known only every ``period`` steps, extrapolated in between."""

    def __init__(self, fleet: Fleet, period: int, dt: float):
        self.fleet, self.period, self.dt = fleet, period, dt
        self.predicted = None

    def accels(self, k, Q, QD, packed):
        m = k % self.period
        if m == 0 or self.predicted is None:
            Qs, QDs, _ = self.fleet.rollout(Q, QD, packed, self.period - 1, self.dt)
            self.predicted = (Qs, QDs)
        Qs, QDs = self.predicted
        QDD = np.zeros_like(Q)
        for i in range(len(self.fleet)):
            Qm, QDm = Qs[m].copy(), QDs[m].copy()
            Qm[i], QDm[i] = Q[i], QD[i]
            QDD[i] = self.fleet.accels(Qm, QDm, packed, step=k)[i]
        return QDD


def run(scenario: Scenario, mode=None, record: bool = True):
    """Simulate ``scenario`` until every goal sequence completes or ``t_max`` elapses.

    Returns ``(RunMetrics, TrajectoryLog | None)``. Planner errors end the run
    and are reported in ``RunMetrics.failure``.
    """
    if scenario.has_random_goals:
        scenario = scenario.realize()
    mode = Mode.parse(mode if mode is not None else scenario.rollout.mode)
    config = replace(scenario.rollout, mode=mode)
    dt = config.dt
    fleet = Fleet(scenario.models, scenario.static)
    N = len(fleet)
    Q, QD = fleet.pack_states([r.start for r in scenario.robots])
    mission = _Mission(scenario)
    params = list(mission.params)
    packed = fleet.pack_params(params)
    state = ResolutionState(rng_seed=scenario.resolution.seed)
    stale = _StalePeers(fleet, scenario.comm_period, dt) if scenario.comm_period > 1 else None
    events: list[DeadlockEvent] = []

    steps = int(round(scenario.t_max / dt))
    if record:
        Tq = np.zeros((steps, N, fleet.n_max))
        Tqd, Tqdd = np.zeros_like(Tq), np.zeros_like(Tq)
    compute = []
    inter, stat = fleet.clearances(Q, QD)
    min_clear = min(inter, stat)
    failure = None
    k = 0
    for k in range(steps):
        t = k * dt
        tic = time.perf_counter()
        try:
            if mode is not Mode.MRDF:
                X, V = fleet.end_effectors(Q, QD)
                if mode is Mode.RF:
                    rr = rollout_arrays(fleet, Q, QD, packed, config)
                    v_bar, pairs = rr.v_bar, rr.deadlock_pairs
                else:
                    v_bar, pairs = _ego_rollouts(fleet, Q, QD, X, V, packed, config)
                changed = False
                if state.active:
                    if check_release(v_bar, t - state.activation_time, X, mission.goals(), config,
                                     state.involved, params[state.involved[0]].goal_tolerance):
                        params = _end_resolution(state, params, mission, events, t, "released")
                        changed = True
                else:
                    # a robot already at its goal satisfies the release test immediately
                    pairs = [pr for pr in pairs if not any(mission.at_goal(r, X[r]) for r in pr)]
                    if pairs:
                        group = deadlock_groups(pairs)[0]
                        order = assign_priority(X, mission.goals(), state.rng, robots=group,
                                                tie_tol=scenario.resolution.tie_tol)
                        params = apply_resolution(state, order, params, X, scenario.resolution,
                                                  time=t)
                        events.append(DeadlockEvent(round(t, 10), tuple(group), tuple(order)))
                        log.info("t=%.2f deadlock %s, priority %s", t, group, order)
                        changed = True
                if changed:
                    packed = fleet.pack_params(params)
            if stale is None:
                QDD = fleet.accels(Q, QD, packed, step=k)
            else:
                QDD = stale.accels(k, Q, QD, packed)
        except FabricError as exc:
            failure = f"{type(exc).__name__}: {exc}"
            log.warning("t=%.2f planner failure: %s", t, failure)
            break
        compute.append(time.perf_counter() - tic)
        if record:
            Tq[k], Tqd[k], Tqdd[k] = Q, QD, QDD
        Q, QD = integrate(Q, QD, QDD, dt)

        inter, stat = fleet.clearances(Q, QD)
        min_clear = min(min_clear, inter, stat)
        X = fleet.end_effectors(Q)
        changed = False
        for i in range(N):
            if mission.update(i, X[i], dt):
                log.debug("t=%.2f robot %d reached goal %d", t + dt, i, mission.index[i] - 1)
                if state.active and i in state.involved:
                    params = _end_resolution(state, params, mission, events, t + dt, "goal reached")
                params[i] = mission.params[i]
                changed = True
        if changed:
            packed = fleet.pack_params(params)
        if mission.all_done():
            mission.finished_at = (k + 1) * dt
            k += 1
            break
    else:
        k = steps

    deadlocked = False
    if failure is None and not mission.all_done():
        try:
            rr = rollout_arrays(fleet, Q, QD, packed, config)
            deadlocked = rr.deadlock
        except FabricError:
            pass

    ms = np.array(compute) * 1e3 if compute else np.zeros(1)
    success = failure is None and mission.all_done()
    metrics = RunMetrics(
        mode=mode.value, seed=scenario.seed,
        success_rate=mission.reached / mission.total,
        time_to_success=mission.finished_at if success else None,
        collision=bool(min_clear < 0.0),
        min_clearance=float(min_clear) if success and np.isfinite(min_clear) else None,
        compute_ms_median=float(np.median(ms)), compute_ms_p95=float(np.percentile(ms, 95)),
        deadlock_events=events, goals_reached=mission.reached, goals_total=mission.total,
        sim_time=k * dt, deadlocked_at_end=deadlocked, failure=failure,
    )
    traj = None
    if record:
        n = len(compute)
        traj = TrajectoryLog(np.arange(n) * dt, Tq[:n], Tqd[:n], Tqdd[:n], fleet.dof.copy())
    return metrics, traj


def _end_resolution(state, params, mission, events, t, reason):
    params = release(state, params)
    for i in range(len(params)):
        params[i] = mission.params[i]
    if events and events[-1].released_at is None:
        events[-1].released_at = round(t, 10)
        events[-1].release_reason = reason
    log.info("t=%.2f resolution %s", t, reason)
    return params


# -- batches -----------------------------------------------------------------


def _mean_std(values):
    vals = np.array([v for v in values if v is not None], dtype=float)
    if vals.size == 0:
        return None, None
    return float(vals.mean()), float(vals.std())


@dataclass
class BatchResult:
    records: list
    summary: dict

    def table(self) -> str:
        cols = [("success", "success rate"), ("collision", "collision rate"),
                ("time_to_success", "time to success [s]"), ("min_clearance", "min clearance [m]"),
                ("compute_ms_median", "compute median [ms]"), ("compute_ms_p95", "compute p95 [ms]"),
                ("deadlocks", "deadlock events")]
        modes = list(self.summary)
        width = max(len(c[1]) for c in cols) + 2
        lines = ["metric".ljust(width) + "".join(m.upper().rjust(20) for m in modes)]
        for key, label in cols:
            row = label.ljust(width)
            for m in modes:
                mean, std = self.summary[m][key]
                row += ("n/a" if mean is None else f"{mean:.3f} ± {std:.3f}").rjust(20)
            lines.append(row)
        lines.append("runs".ljust(width) + "".join(str(self.summary[m]["runs"]).rjust(20)
                                                  for m in modes))
        return "\n".join(lines)

    def to_json(self) -> str:
        return json.dumps({"summary": self.summary, "runs": self.records}, indent=2)


def summarize(metrics) -> dict:
    metrics = list(metrics)
    return {
        "runs": len(metrics),
        "success": _mean_std([float(m.success) for m in metrics]),
        "collision": _mean_std([float(m.collision) for m in metrics]),
        "time_to_success": _mean_std([m.time_to_success for m in metrics]),
        "min_clearance": _mean_std([m.min_clearance for m in metrics]),
        "compute_ms_median": _mean_std([m.compute_ms_median for m in metrics]),
        "compute_ms_p95": _mean_std([m.compute_ms_p95 for m in metrics]),
        "deadlocks": _mean_std([float(len(m.deadlock_events)) for m in metrics]),
    }


def batch(scenario: Scenario, runs: int, modes=("mrdf", "rf"), seeds=None, progress=None):
    """Run every mode on ``runs`` seeded goal draws and aggregate mean and std per mode."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    seeds = list(seeds) if seeds is not None else [scenario.seed + s for s in range(runs)]
    modes = [Mode.parse(m) for m in modes]
    per_mode = {m.value: [] for m in modes}
    for seed in seeds[:runs]:
        drawn = scenario.with_overrides(seed=seed).realize(seed)
        for m in modes:
            metrics, _ = run(drawn, m, record=False)
            per_mode[m.value].append(metrics)
            if progress is not None:
                progress(seed, m.value, metrics)
    records = [m.as_record() for ms in per_mode.values() for m in ms]
    return BatchResult(records, {m: summarize(ms) for m, ms in per_mode.items()})


def bench_horizon(scenario: Scenario, horizons=(5, 10, 20, 40, 80), t_max: float = 2.0,
                  mode="rf", rounds: int = 3) -> dict:
    """Median and p95 per-step compute time (ms) for each rollout horizon.

    Horizons are run round-robin for ``rounds`` rounds so slow periods on the
    host spread over all horizons; the reported values are medians over rounds.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    base = replace(scenario, t_max=min(t_max, scenario.t_max))
    if base.has_random_goals:
        base = base.realize()
    samples = {int(K): [] for K in horizons}
    for _ in range(rounds):
        for K in samples:
            metrics, _ = run(base.with_overrides(mode=mode, horizon=K), record=False)
            samples[K].append((metrics.compute_ms_median, metrics.compute_ms_p95))
    return {K: {"median_ms": float(np.median([m for m, _ in v])),
                "p95_ms": float(np.median([p for _, p in v]))} for K, v in samples.items()}


def write_outputs(out_dir, metrics: RunMetrics, traj: TrajectoryLog | None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if traj is not None:
        traj.write_csv(out / "trajectory.csv")
    (out / "metrics.json").write_text(json.dumps(metrics.as_record(), indent=2))
