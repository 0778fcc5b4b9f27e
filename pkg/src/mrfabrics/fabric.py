"""Single-robot fabric: barrier components, attractor, and the forced, damped policy.

Every avoidance component lives on a scalar clearance coordinate ``d`` with

    geometry   h(d, dd)  = -gain * dd**2 / d**2   while approaching (dd < 0), else 0
    energy     L(d, dd)  = 0.5 * (lam_m / d) * dd**2

The weighted components are pulled into joint space and summed, the sum is
energized with the summed energy, and the result is forced towards the goal
and damped. ``FabricPolicy.__call__`` runs the fused kernel; ``reference``
builds the same policy out of :mod:`mrfabrics.specs` operations.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import kernels
from .errors import GradientSingularity, NonpositiveDistance, SingularMetric
from .kinematics import RobotModel, point_map
from .specs import (DifferentialMap, EnergyLagrangian, Geometry, RelativeMotionFrame, Spec,
                    check_invertible, compose, dynamic_pullback, energize, pullback, sum_specs,
                    weight)

GAMMA_LOW = 2.0
GAMMA_HIGH = 3.0
DEFAULT_DAMPING = 0.8
DEFAULT_COLLISION_GAIN = 1.0
DEFAULT_LIMIT_GAIN = 1.0
GOAL_TOLERANCE = 0.02
ATTRACTOR_SMOOTHING = 0.1
ATTRACTOR_SCALE = 1.0
BARRIER_METRIC_SCALE = 1.0


@dataclass(frozen=True)
class PlannerParams:
    """Per-robot parameter vector: goal, attractor weight, damping and gains."""

    goal: np.ndarray
    attractor_weight: float = GAMMA_LOW
    damping: np.ndarray | float = DEFAULT_DAMPING
    collision_gain: float = DEFAULT_COLLISION_GAIN
    limit_gain: float = DEFAULT_LIMIT_GAIN
    goal_tolerance: float = GOAL_TOLERANCE

    def __post_init__(self):
        object.__setattr__(self, "goal", np.asarray(self.goal, dtype=float).reshape(2))
        if self.attractor_weight < 0:
            raise ValueError("attractor weight must be >= 0")
        if self.collision_gain <= 0 or self.limit_gain <= 0:
            raise ValueError("barrier gains must be > 0")
        B = np.asarray(self.damping, dtype=float)
        if B.ndim == 2:
            if np.max(np.abs(B - B.T)) > 1e-12:
                raise ValueError("damping must be symmetric")
            if B.size and np.linalg.eigvalsh(B).min() < 0:
                raise ValueError("damping must be positive semi-definite")
        elif B.ndim == 0 and B < 0:
            raise ValueError("damping must be >= 0")

    def damping_matrix(self, n: int) -> np.ndarray:
        B = np.asarray(self.damping, dtype=float)
        return B * np.eye(n) if B.ndim == 0 else B.reshape(n, n)

    def with_goal(self, goal) -> "PlannerParams":
        return replace(self, goal=np.asarray(goal, dtype=float))

    def with_weight(self, gamma: float) -> "PlannerParams":
        return replace(self, attractor_weight=float(gamma))


# -- barrier components ------------------------------------------------------


def _barrier_geometry(gain: float) -> Geometry:
    def h(d, dd):
        if d[0] <= 0:
            raise NonpositiveDistance(f"clearance {d[0]:g} <= 0")
        return np.array([-gain * dd[0] ** 2 / d[0] ** 2 if dd[0] < 0 else 0.0])

    return Geometry(1, h)


def _barrier_energy(lam_m: float = BARRIER_METRIC_SCALE) -> EnergyLagrangian:
    def positive(d):
        if d[0] <= 0:
            raise NonpositiveDistance(f"clearance {d[0]:g} <= 0")
        return d[0]

    return EnergyLagrangian(
        1,
        metric=lambda d, dd: np.array([[lam_m / positive(d)]]),
        force=lambda d, dd: np.array([-0.5 * lam_m * dd[0] ** 2 / positive(d) ** 2]),
        energy=lambda d, dd: 0.5 * lam_m / positive(d) * float(dd[0]) ** 2,
    )


def avoidance_geometry(gain: float, lam_m: float = BARRIER_METRIC_SCALE):
    """Repulsive barrier on a clearance coordinate, active only while approaching."""
    if gain <= 0:
        raise ValueError("collision gain must be > 0")
    return _barrier_geometry(gain), _barrier_energy(lam_m)


def limit_geometry(gain: float, lam_m: float = BARRIER_METRIC_SCALE):
    """Same barrier family, applied to the joint margins ``q - lower`` and ``upper - q``."""
    if gain <= 0:
        raise ValueError("limit gain must be > 0")
    return _barrier_geometry(gain), _barrier_energy(lam_m)


def limit_maps(model: RobotModel) -> list[DifferentialMap]:
    """Margin maps for every joint: lower margin then upper margin, joint by joint."""
    n = model.dof
    maps = []
    for j in range(n):
        for sign, bound in ((1.0, model.lower[j]), (-1.0, model.upper[j])):
            row = np.zeros((1, n))
            row[0, j] = sign
            maps.append(DifferentialMap(
                n, 1,
                phi=lambda q, s=sign, b=bound, j=j: np.array([s * (q[j] - b)]),
                jacobian=lambda q, r=row: r,
                jdot_qdot=lambda q, qd: np.zeros(1),
            ))
    return maps


def clearance_map(center, radius_sum: float) -> DifferentialMap:
    """``x -> |x - center| - radius_sum`` on the plane."""
    c = np.asarray(center, dtype=float).reshape(2)

    def unit(x):
        r = np.asarray(x, dtype=float) - c
        rho = np.linalg.norm(r)
        if rho < 1e-12:
            raise GradientSingularity("sphere centers coincide")
        return r / rho, rho

    def phi(x):
        _, rho = unit(x)
        return np.array([rho - radius_sum])

    def jac(x):
        u, _ = unit(x)
        return u[None, :]

    def jdqd(x, xd):
        u, rho = unit(x)
        return np.array([(xd @ xd - (u @ xd) ** 2) / rho])

    return DifferentialMap(2, 1, phi, jac, jdqd)


def distance_map(sphere: DifferentialMap, obstacle_center, r_a: float, r_b: float) -> DifferentialMap:
    """Clearance between a robot sphere (given by its point map) and a fixed obstacle."""
    if r_a <= 0 or r_b <= 0:
        raise ValueError("radii must be > 0")
    return compose(sphere, clearance_map(obstacle_center, r_a + r_b))


# -- attractor -------------------------------------------------------------


@dataclass(frozen=True)
class Attractor:
    """Smooth-norm potential ``k (r + s log(1 + exp(-2 r / s)))`` around ``goal``.

    Its gradient is ``k tanh(r / s) e / r``: zero at the goal and of magnitude
    approaching ``k`` far away.
    """

    goal: np.ndarray
    weight: float = GAMMA_LOW
    scale: float = ATTRACTOR_SCALE
    smoothing: float = ATTRACTOR_SMOOTHING
    metric_weight: float = 1.0

    def potential(self, x) -> float:
        r = float(np.linalg.norm(np.asarray(x, dtype=float) - self.goal))
        s = self.smoothing
        return self.scale * (r + s * np.logaddexp(0.0, -2.0 * r / s))

    def gradient(self, x) -> np.ndarray:
        e = np.asarray(x, dtype=float) - self.goal
        r = float(np.linalg.norm(e))
        if r <= 1e-12:
            return self.scale / self.smoothing * e
        return self.scale * np.tanh(r / self.smoothing) / r * e

    def metric(self, x=None, xd=None) -> np.ndarray:
        return self.metric_weight * np.eye(2)

    def lagrangian(self) -> EnergyLagrangian:
        return EnergyLagrangian.euclidean(2, self.metric_weight)


def attractor(goal, gamma: float = GAMMA_LOW, **kw) -> Attractor:
    if gamma < 0:
        raise ValueError("attractor weight must be >= 0")
    return Attractor(np.asarray(goal, dtype=float).reshape(2), float(gamma), **kw)


# -- obstacles ---------------------------------------------------------------


@dataclass(frozen=True)
class Obstacles:
    """Obstacle spheres seen by one robot: centers, velocities and radii."""

    centers: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    velocities: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    radii: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        c = np.ascontiguousarray(self.centers, dtype=float).reshape(-1, 2)
        v = np.ascontiguousarray(self.velocities, dtype=float).reshape(-1, 2)
        r = np.ascontiguousarray(self.radii, dtype=float).reshape(-1)
        if not (c.shape[0] == v.shape[0] == r.shape[0]):
            raise ValueError("obstacle arrays disagree in length")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "velocities", v)
        object.__setattr__(self, "radii", r)

    def __len__(self):
        return self.radii.shape[0]

    @classmethod
    def from_list(cls, items) -> "Obstacles":
        """From ``(center, velocity, radius)`` or ``(center, radius)`` tuples."""
        items = list(items)
        if not items:
            return cls()
        cs, vs, rs = [], [], []
        for it in items:
            if len(it) == 2:
                c, r = it
                v = np.zeros(2)
            else:
                c, v, r = it
            cs.append(c)
            vs.append(v)
            rs.append(r)
        return cls(np.array(cs, dtype=float), np.array(vs, dtype=float), np.array(rs, dtype=float))

    def __add__(self, other: "Obstacles") -> "Obstacles":
        return Obstacles(np.vstack([self.centers, other.centers]),
                         np.vstack([self.velocities, other.velocities]),
                         np.concatenate([self.radii, other.radii]))


def _as_obstacles(obstacles) -> Obstacles:
    if isinstance(obstacles, Obstacles):
        return obstacles
    return Obstacles.from_list(obstacles or ())


# -- the policy --------------------------------------------------------------


@dataclass(frozen=True)
class Component:
    """Leaf of the fabric: a task map, a geometry and an energy, optionally moving."""

    name: str
    task_map: DifferentialMap
    geometry: Geometry
    energy: EnergyLagrangian
    relative_map: DifferentialMap | None = None
    frame: RelativeMotionFrame | None = None

    def _on_task(self, spec_1d: Spec) -> Spec:
        if self.frame is None:
            return pullback(self.task_map, spec_1d)
        rel = pullback(self.relative_map, spec_1d)
        return pullback(self.task_map, dynamic_pullback(self.frame, rel))

    def weighted_spec(self) -> Spec:
        return self._on_task(weight(self.geometry, self.energy))

    def energy_spec(self) -> Spec:
        return self._on_task(self.energy.spec())


@dataclass(frozen=True)
class FabricPolicy:
    """Compiled policy ``(q, qd, obstacles, params) -> qdd`` for one robot."""

    model: RobotModel
    params: PlannerParams
    consts: np.ndarray = field(default_factory=kernels.make_consts)

    def __call__(self, q, qd, obstacles=None, params: PlannerParams | None = None) -> np.ndarray:
        qdd, status, info = self.evaluate(q, qd, obstacles, params)
        return qdd

    def evaluate(self, q, qd, obstacles=None, params: PlannerParams | None = None):
        """Like ``__call__`` but also returns the kernel status and info code.

        Raises on a singular distance gradient or an unrecoverable metric.
        """
        p = self.params if params is None else params
        obs = _as_obstacles(obstacles)
        m = self.model
        n = m.dof
        q = np.ascontiguousarray(q, dtype=float).reshape(n)
        qd = np.ascontiguousarray(qd, dtype=float).reshape(n)
        qdd, status, info = kernels.policy_accel(
            q, qd, m.link_lengths, m.base_pose, m.lower.copy(), m.upper.copy(),
            m.sphere_links, m.sphere_offsets, m.sphere_radii,
            obs.centers, obs.velocities, obs.radii, p.goal, float(p.attractor_weight),
            p.damping_matrix(n), float(p.collision_gain), float(p.limit_gain), self.consts)
        raise_for_status(status, info, len(obs))
        return qdd, status, info

    def components(self, obstacles=None, params: PlannerParams | None = None) -> list[Component]:
        p = self.params if params is None else params
        obs = _as_obstacles(obstacles)
        lam_m = float(self.consts[kernels.C_LAM_M])
        m = self.model
        comps = []
        geom, energy = limit_geometry(p.limit_gain, lam_m)
        for k, lmap in enumerate(limit_maps(m)):
            comps.append(Component(f"limit{k}", lmap, geom, energy))
        geom, energy = avoidance_geometry(p.collision_gain, lam_m)
        for a, (link, off, ra) in enumerate(m.sphere_layout):
            smap = point_map(m, link, off)
            for b in range(len(obs)):
                frame = RelativeMotionFrame.moving(obs.centers[b], obs.velocities[b])
                rel = clearance_map(np.zeros(2), ra + obs.radii[b])
                comps.append(Component(f"sphere{a}-obs{b}", smap, geom, energy, rel, frame))
        att = self.attractor(p)
        comps.append(Component("attractor-metric", point_map(m, m.dof - 1, 1.0),
                               Geometry(2, lambda x, xd: np.zeros(2)), att.lagrangian()))
        return comps

    def attractor(self, params: PlannerParams | None = None) -> Attractor:
        p = self.params if params is None else params
        return Attractor(p.goal, float(p.attractor_weight),
                         float(self.consts[kernels.C_K_ATTR]),
                         float(self.consts[kernels.C_SMOOTH]),
                         float(self.consts[kernels.C_W_ATTR]))

    def combined_specs(self, obstacles=None, params=None, extra: Sequence[Spec] = ()):
        """Joint-space weighted-geometry spec and energy spec, summed over components."""
        comps = self.components(obstacles, params)
        n = self.model.dof
        geometry = sum_specs([c.weighted_spec() for c in comps] + list(extra), n)
        energy = sum_specs([c.energy_spec() for c in comps] + list(extra), n)
        return geometry, energy

    def energized_spec(self, obstacles=None, params=None, extra: Sequence[Spec] = ()) -> Spec:
        geometry, energy = self.combined_specs(obstacles, params, extra)
        n = self.model.dof

        def h(q, qd):
            M, f = geometry(q, qd)
            check_invertible(M)
            return np.linalg.solve(M, f)

        def metric(q, qd):
            return energy(q, qd)[0]

        def force(q, qd):
            return energy(q, qd)[1]

        lag = EnergyLagrangian(n, metric, force, lambda q, qd: 0.5 * qd @ metric(q, qd) @ qd)
        return energize(Geometry(n, h), lag)

    def reference(self, q, qd, obstacles=None, params=None, extra: Sequence[Spec] = ()) -> np.ndarray:
        """Acceleration assembled from spec-algebra operations (slow, for cross-checks)."""
        p = self.params if params is None else params
        q = np.asarray(q, dtype=float)
        qd = np.asarray(qd, dtype=float)
        M, f = self.energized_spec(obstacles, p, extra)(q, qd)
        ee = point_map(self.model, self.model.dof - 1, 1.0)
        forcing = p.attractor_weight * ee.jacobian(q).T @ self.attractor(p).gradient(ee.phi(q))
        check_invertible(M)
        return -np.linalg.solve(M, f + forcing + p.damping_matrix(self.model.dof) @ qd)

    def energy(self, q, qd, obstacles=None, params=None) -> float:
        """Total component energy ``0.5 qd^T M qd`` of the combined fabric."""
        _, energy = self.combined_specs(obstacles, params)
        M, _ = energy(q, qd)
        return float(0.5 * np.asarray(qd) @ M @ np.asarray(qd))


def raise_for_status(status: int, info: int, n_obs: int, robot=None, step=None) -> None:
    if status == kernels.GRADIENT_SINGULAR:
        a, b = divmod(int(info), max(n_obs, 1))
        raise GradientSingularity(f"sphere {a} coincides with obstacle {b}",
                                  robot=robot, sphere=a, step=step)
    if status == kernels.METRIC_SINGULAR:
        raise SingularMetric("fabric metric singular after regularization", robot=robot, step=step)


def build_policy(model: RobotModel, params: PlannerParams, **consts) -> FabricPolicy:
    """Policy for ``model`` with joint-limit, collision and attractor components.

    Keyword arguments override kernel constants (``lam_m``, ``smoothing``,
    ``k_attr``, ``w_attr``, ``d_floor``, ``eps``).
    """
    return FabricPolicy(model, params, kernels.make_consts(**consts))
