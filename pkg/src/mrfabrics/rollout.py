"""Rollout fabrics: forward-propagate every robot's policy and look for deadlocks."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .multi_robot import Fleet, FleetSnapshot, fleet_from_planners
from .kinematics import RobotState


class Mode(str, Enum):
    MRDF = "mrdf"
    RF = "rf"
    RF_CV = "rf-cv"

    @classmethod
    def parse(cls, value) -> "Mode":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        for m in cls:
            if m.value == key:
                return m
        raise ValueError(f"unknown mode {value!r}; expected one of mrdf, rf, rf-cv")


@dataclass(frozen=True)
class RolloutConfig:
    K: int = 10
    dt: float = 0.01
    v_d_min: float = 0.03
    d_ee_c: float = 0.35
    t_d_min: float = 3.0
    H: int | None = None
    mode: Mode = Mode.RF

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode.parse(self.mode))
        if self.K < 1 or self.dt <= 0:
            raise ValueError("need K >= 1 and dt > 0")
        if min(self.v_d_min, self.d_ee_c, self.t_d_min) <= 0:
            raise ValueError("deadlock thresholds must be positive")
        if self.H is not None and self.H < 0:
            raise ValueError("goal lookahead H must be >= 0")

    @property
    def horizon(self) -> float:
        return self.K * self.dt

    @property
    def lookahead(self) -> int:
        return self.K if self.H is None else self.H


@dataclass
class RolloutResult:
    """Predicted trajectories of every robot plus the deadlock verdict.

    Arrays are padded to the widest robot: ``q`` and ``qd`` have shape
    ``(K + 1, N, n_max)`` and ``qdd`` has shape ``(K, N, n_max)``.
    """

    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    v_bar: np.ndarray
    ee: np.ndarray
    ee_distances: np.ndarray
    deadlock: bool = False
    deadlock_pairs: list = field(default_factory=list)

    @property
    def K(self) -> int:
        return self.qdd.shape[0]


def integrate(q, qd, qdd, dt):
    """Explicit second-order step: ``q' = q + dt qd``, ``qd' = qd + dt qdd``."""
    return q + dt * qd, qd + dt * qdd


def integrator_matrices(n: int, dt: float):
    """The block matrices ``A`` and ``B`` of the same step in state-space form."""
    I = np.eye(n)
    Z = np.zeros((n, n))
    A = np.block([[I, dt * I], [Z, I]])
    B = np.vstack([Z, dt * I])
    return A, B


def average_speeds(QDs: np.ndarray, dof) -> np.ndarray:
    """Mean joint-speed norm along the horizon.

    Sums the ``K + 1`` samples ``k = 0..K`` and divides by ``K``.
    """
    K = QDs.shape[0] - 1
    return np.array([np.linalg.norm(QDs[:, i, : dof[i]], axis=-1).sum() / K
                     for i in range(QDs.shape[1])])


def pairwise_distances(X: np.ndarray) -> np.ndarray:
    return np.linalg.norm(X[:, None, :] - X[None, :, :], axis=-1)


def detect_deadlock(v_bar, ee, config: RolloutConfig):
    """Pairs ``(i, p)`` with both mean speeds below ``v_d_min`` and end effectors within ``d_ee_c``."""
    v_bar = np.asarray(v_bar, dtype=float)
    D = pairwise_distances(np.asarray(ee, dtype=float))
    slow = v_bar < config.v_d_min
    pairs = [(i, p) for i in range(len(v_bar)) for p in range(i + 1, len(v_bar))
             if slow[i] and slow[p] and D[i, p] < config.d_ee_c]
    return bool(pairs), pairs


def estimate_goal(x_ee, v_ee, H: int, dt: float) -> np.ndarray:
    """Constant-velocity extrapolation of a peer's end effector over ``H`` steps."""
    return np.asarray(x_ee, dtype=float) + H * dt * np.asarray(v_ee, dtype=float)


def rollout_arrays(fleet: Fleet, Q, QD, packed: dict, config: RolloutConfig) -> RolloutResult:
    Qs, QDs, QDDs = fleet.rollout(Q, QD, packed, config.K, config.dt)
    v_bar = average_speeds(QDs, fleet.dof)
    ee = fleet.end_effectors(Q)
    D = pairwise_distances(ee)
    dead, pairs = detect_deadlock(v_bar, ee, config)
    return RolloutResult(Qs, QDs, QDDs, v_bar, ee, D, dead, pairs)


def rollout(planners, snapshot: FleetSnapshot, config: RolloutConfig,
            fleet: Fleet | None = None) -> RolloutResult:
    """Propagate all robots ``config.K`` steps from ``snapshot`` and test for deadlock."""
    if fleet is None:
        fleet = planners if isinstance(planners, Fleet) else fleet_from_planners(planners)
    Q, QD = fleet.pack_states(snapshot.states)
    return rollout_arrays(fleet, Q, QD, fleet.pack_params(snapshot.params), config)


def extrapolate_stale(fleet: Fleet, snapshot: FleetSnapshot, elapsed: float, dt: float,
                      robot: int | None = None):
    """Forward-propagate a stale snapshot by ``elapsed`` seconds (a whole number of steps).

    Returns the approximate state of ``robot``, or of every robot when ``robot`` is None.
    """
    steps = int(round(elapsed / dt))
    if elapsed < 0 or abs(steps * dt - elapsed) > 1e-9 * max(1.0, elapsed):
        raise ValueError("elapsed time must be a non-negative multiple of dt")
    if steps == 0:
        states = list(snapshot.states)
    else:
        Q, QD = fleet.pack_states(snapshot.states)
        Qs, QDs, _ = fleet.rollout(Q, QD, fleet.pack_params(snapshot.params), steps, dt)
        states = [RobotState(q, qd) for q, qd in zip(fleet.unpack(Qs[-1]), fleet.unpack(QDs[-1]))]
    return states if robot is None else states[robot]
