"""Decentralized multi-robot fabrics: peers' collision spheres become moving obstacles."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .errors import DimensionMismatch, FabricError
from .fabric import FabricPolicy, Obstacles, PlannerParams, build_policy, raise_for_status
from .kinematics import RobotModel, RobotState, collision_spheres


@dataclass(frozen=True)
class FleetSnapshot:
    """Synchronized fleet state: per-robot states and parameters at ``timestamp``."""

    states: tuple
    params: tuple
    timestamp: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "params", tuple(self.params))
        if not self.states or len(self.states) != len(self.params):
            raise DimensionMismatch("snapshot needs one state and one parameter set per robot")

    def __len__(self):
        return len(self.states)


class Fleet:
    """Packed, padded arrays for a fixed set of robots and static obstacles.

    All kernels that touch more than one robot go through here.
    """

    def __init__(self, models: Sequence[RobotModel], static: Obstacles | None = None, consts=None):
        self.models = tuple(models)
        if not self.models:
            raise ValueError("fleet needs at least one robot")
        self.static = static if static is not None else Obstacles()
        self.consts = kernels.make_consts() if consts is None else np.asarray(consts, dtype=float)
        N = len(self.models)
        self.n_max = max(m.dof for m in self.models)
        self.l_max = max(max(m.n_spheres for m in self.models), 1)
        self.dof = np.array([m.dof for m in self.models], dtype=np.int64)
        self.nsph = np.array([m.n_spheres for m in self.models], dtype=np.int64)
        self.lengths = np.zeros((N, self.n_max))
        self.base = np.zeros((N, 3))
        self.lo = np.zeros((N, self.n_max))
        self.hi = np.zeros((N, self.n_max))
        self.sph_link = np.zeros((N, self.l_max), dtype=np.int64)
        self.sph_off = np.zeros((N, self.l_max))
        self.sph_rad = np.zeros((N, self.l_max))
        for i, m in enumerate(self.models):
            n, L = m.dof, m.n_spheres
            self.lengths[i, :n] = m.link_lengths
            self.base[i] = m.base_pose
            self.lo[i, :n] = m.lower
            self.hi[i, :n] = m.upper
            self.sph_link[i, :L] = m.sphere_links
            self.sph_off[i, :L] = m.sphere_offsets
            self.sph_rad[i, :L] = m.sphere_radii
        self.static_c = np.ascontiguousarray(self.static.centers)
        self.static_r = np.ascontiguousarray(self.static.radii)

    def __len__(self):
        return len(self.models)

    def obstacle_slots(self, i: int) -> int:
        """Number of moving-obstacle slots robot ``i`` plans against."""
        return int(self.nsph.sum() - self.nsph[i])

    # -- packing -----------------------------------------------------------

    def pack_states(self, states) -> tuple[np.ndarray, np.ndarray]:
        N = len(self)
        if len(states) != N:
            raise DimensionMismatch(f"expected {N} robot states, got {len(states)}")
        Q = np.zeros((N, self.n_max))
        QD = np.zeros((N, self.n_max))
        for i, s in enumerate(states):
            n = self.dof[i]
            Q[i, :n] = s.q
            QD[i, :n] = s.qd
        return Q, QD

    def unpack(self, X: np.ndarray) -> list[np.ndarray]:
        return [X[i, : self.dof[i]].copy() for i in range(len(self))]

    def pack_params(self, params) -> dict:
        N = len(self)
        if len(params) != N:
            raise DimensionMismatch(f"expected {N} parameter sets, got {len(params)}")
        damping = np.zeros((N, self.n_max, self.n_max))
        for i, p in enumerate(params):
            n = self.dof[i]
            damping[i, :n, :n] = p.damping_matrix(n)
        return dict(
            goals=np.array([p.goal for p in params], dtype=float),
            gammas=np.array([p.attractor_weight for p in params], dtype=float),
            damping=damping,
            lam=np.array([p.collision_gain for p in params], dtype=float),
            lam_lim=np.array([p.limit_gain for p in params], dtype=float),
        )

    # -- kernels -----------------------------------------------------------

    def model_args(self):
        return (self.dof, self.lengths, self.base, self.lo, self.hi, self.sph_link, self.sph_off,
                self.sph_rad, self.nsph, self.static_c, self.static_r)

    def sphere_states(self, Q, QD):
        return kernels.fleet_sphere_states(Q, QD, self.dof, self.lengths, self.base, self.sph_link,
                                           self.sph_off, self.nsph)

    def accels(self, Q, QD, packed: dict, step=None) -> np.ndarray:
        QDD, status, info = kernels.fleet_accels(
            Q, QD, *self.model_args(), packed["goals"], packed["gammas"], packed["damping"],
            packed["lam"], packed["lam_lim"], self.consts)
        for i in range(len(self)):
            raise_for_status(int(status[i]), int(info[i]), self.obstacle_slots(i) + len(self.static),
                             robot=i, step=step)
        return QDD

    def rollout(self, Q, QD, packed: dict, K: int, dt: float):
        Qs, QDs, QDDs, status, robot, step, info = kernels.rollout(
            Q, QD, *self.model_args(), packed["goals"], packed["gammas"], packed["damping"],
            packed["lam"], packed["lam_lim"], self.consts, int(K), float(dt))
        if status >= kernels.GRADIENT_SINGULAR:
            raise_for_status(int(status), int(info),
                             self.obstacle_slots(int(robot)) + len(self.static),
                             robot=int(robot), step=int(step))
        return Qs, QDs, QDDs

    def end_effectors(self, Q, QD=None):
        """End-effector positions (and velocities when ``QD`` is given), shape ``(N, 2)``."""
        X, V = kernels.fleet_end_effectors(Q, np.zeros_like(Q) if QD is None else QD, self.dof,
                                           self.lengths, self.base)
        return (X, V) if QD is not None else X

    def clearances(self, Q, QD=None):
        """Minimum inter-robot and robot-static sphere clearances at ``Q``."""
        C, _ = self.sphere_states(Q, np.zeros_like(Q) if QD is None else QD)
        inter, static = kernels.min_clearances(C, self.nsph, self.sph_rad, self.static_c,
                                               self.static_r)
        return float(inter), float(static)


class MrdfPlanner:
    """Planner for robot ``robot_id`` of a fleet.

    The planner owns its own fabric and the geometric models of its peers; at
    each step it reads nothing but the snapshot.
    """

    def __init__(self, robot_id: int, models: Sequence[RobotModel], params: PlannerParams,
                 static: Obstacles | None = None, **consts):
        self.robot_id = int(robot_id)
        self.models = tuple(models)
        self.policy: FabricPolicy = build_policy(self.models[self.robot_id], params, **consts)
        self.static = static if static is not None else Obstacles()

    @property
    def model(self) -> RobotModel:
        return self.models[self.robot_id]

    @property
    def obstacle_slots(self) -> int:
        return sum(m.n_spheres for p, m in enumerate(self.models) if p != self.robot_id)

    def peer_obstacles(self, snapshot: FleetSnapshot) -> Obstacles:
        items = []
        for p, model in enumerate(self.models):
            if p == self.robot_id:
                continue
            items.extend(collision_spheres(model, snapshot.states[p]))
        obs = Obstacles.from_list(items)
        return obs + self.static if len(self.static) else obs


def plan_step(planner: MrdfPlanner, snapshot: FleetSnapshot) -> np.ndarray:
    """Acceleration of ``planner``'s robot given the fleet snapshot."""
    if len(snapshot) != len(planner.models):
        raise DimensionMismatch(f"snapshot has {len(snapshot)} robots, planner expects "
                                f"{len(planner.models)}")
    i = planner.robot_id
    obs = planner.peer_obstacles(snapshot)
    state = snapshot.states[i]
    try:
        return planner.policy(state.q, state.qd, obs, snapshot.params[i])
    except FabricError as exc:
        exc.robot = i
        raise


def synchronous_step(planners: Sequence[MrdfPlanner], snapshot: FleetSnapshot, dt: float | None = None):
    """Every planner reads the same snapshot; optionally advance all robots together.

    Returns the accelerations, plus the advanced snapshot when ``dt`` is given.
    """
    from .rollout import integrate

    accs = [plan_step(p, snapshot) for p in planners]
    if dt is None:
        return accs
    states = []
    for s, a in zip(snapshot.states, accs):
        q, qd = integrate(s.q, s.qd, a, dt)
        states.append(RobotState(q, qd))
    return accs, FleetSnapshot(states, snapshot.params, snapshot.timestamp + dt)


head_on_scenario_step = synchronous_step


def fleet_from_planners(planners: Sequence[MrdfPlanner]) -> Fleet:
    first = planners[0]
    return Fleet(first.models, first.static, first.policy.consts)
