"""Planar revolute serial chains: forward kinematics, Jacobians and collision spheres."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import IndexOutOfRange
from .specs import DifferentialMap

DEFAULT_LENGTHS = (0.4, 0.35, 0.25)
DEFAULT_OFFSETS = (0.33, 0.83)
DEFAULT_RADIUS = 0.08
DEFAULT_LIMIT = 2.6


@dataclass(frozen=True)
class RobotModel:
    """Planar chain mounted at ``base_pose = (x, y, heading)``.

    ``sphere_layout`` lists ``(link_index, offset_fraction, radius)`` triples;
    the sphere sits at ``offset_fraction`` of the way along that link.
    """

    link_lengths: np.ndarray
    base_pose: np.ndarray = field(default_factory=lambda: np.zeros(3))
    joint_limits: np.ndarray | None = None
    sphere_layout: tuple = ()
    name: str = ""

    def __post_init__(self):
        lengths = np.asarray(self.link_lengths, dtype=float).reshape(-1)
        object.__setattr__(self, "link_lengths", lengths)
        object.__setattr__(self, "base_pose", np.asarray(self.base_pose, dtype=float).reshape(3))
        n = lengths.shape[0]
        limits = self.joint_limits
        if limits is None:
            limits = np.tile([-DEFAULT_LIMIT, DEFAULT_LIMIT], (n, 1))
        limits = np.asarray(limits, dtype=float).reshape(n, 2)
        object.__setattr__(self, "joint_limits", limits)
        layout = tuple((int(k), float(o), float(r)) for k, o, r in self.sphere_layout)
        object.__setattr__(self, "sphere_layout", layout)
        if n == 0 or np.any(lengths <= 0):
            raise ValueError("link lengths must be positive")
        if np.any(limits[:, 0] >= limits[:, 1]):
            raise ValueError("every joint needs lower < upper")
        for k, o, r in layout:
            if not 0 <= k < n:
                raise IndexOutOfRange(f"sphere on link {k} of a {n}-link chain")
            if not 0.0 <= o <= 1.0 or r <= 0:
                raise ValueError(f"bad sphere ({k}, {o}, {r})")

    @property
    def dof(self) -> int:
        return self.link_lengths.shape[0]

    @property
    def n_spheres(self) -> int:
        return len(self.sphere_layout)

    @property
    def lower(self) -> np.ndarray:
        return self.joint_limits[:, 0]

    @property
    def upper(self) -> np.ndarray:
        return self.joint_limits[:, 1]

    @property
    def reach(self) -> float:
        return float(self.link_lengths.sum())

    @property
    def sphere_links(self) -> np.ndarray:
        return np.array([s[0] for s in self.sphere_layout], dtype=np.int64)

    @property
    def sphere_offsets(self) -> np.ndarray:
        return np.array([s[1] for s in self.sphere_layout], dtype=float)

    @property
    def sphere_radii(self) -> np.ndarray:
        return np.array([s[2] for s in self.sphere_layout], dtype=float)

    def translated(self, dx: float, dy: float) -> "RobotModel":
        base = self.base_pose + np.array([dx, dy, 0.0])
        return RobotModel(self.link_lengths, base, self.joint_limits, self.sphere_layout, self.name)


def desk_robot(base_pose=(0.0, 0.0, 0.0), lengths=DEFAULT_LENGTHS, offsets=DEFAULT_OFFSETS,
               radius=DEFAULT_RADIUS, limit=DEFAULT_LIMIT, name="") -> RobotModel:
    """The default 3-DOF desk arm with two spheres per link."""
    n = len(lengths)
    layout = tuple((k, o, radius) for k in range(n) for o in offsets)
    return RobotModel(np.array(lengths, dtype=float), np.asarray(base_pose, dtype=float),
                      np.tile([-limit, limit], (n, 1)), layout, name)


@dataclass(frozen=True)
class RobotState:
    q: np.ndarray
    qd: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(-1)
        qd = np.asarray(self.qd, dtype=float).reshape(-1)
        if q.shape != qd.shape:
            raise ValueError("q and qd must have the same length")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
            raise ValueError("robot state must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qd", qd)

    @classmethod
    def at_rest(cls, q) -> "RobotState":
        q = np.asarray(q, dtype=float)
        return cls(q, np.zeros_like(q))


def _check_point(model: RobotModel, link: int, offset: float) -> None:
    if not 0 <= link < model.dof:
        raise IndexOutOfRange(f"link {link} out of range for {model.dof}-link chain")
    if not 0.0 <= offset <= 1.0:
        raise IndexOutOfRange(f"offset {offset} outside [0, 1]")


def _q(model: RobotModel, q) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.shape[0] != model.dof:
        raise IndexOutOfRange(f"expected {model.dof} joints, got {q.shape[0]}")
    return q


def fk_point(model: RobotModel, q, link: int, offset: float) -> np.ndarray:
    """World position of the point ``offset`` along ``link``."""
    _check_point(model, link, offset)
    q = _q(model, q)
    p, _, _ = kernels.point_kinematics(q, np.zeros_like(q), model.link_lengths, model.base_pose,
                                       int(link), float(offset))
    return p


def end_effector(model: RobotModel, q) -> np.ndarray:
    return fk_point(model, q, model.dof - 1, 1.0)


def end_effector_velocity(model: RobotModel, q, qd) -> np.ndarray:
    q = _q(model, q)
    _, J, _ = kernels.point_kinematics(q, np.asarray(qd, dtype=float), model.link_lengths,
                                       model.base_pose, model.dof - 1, 1.0)
    return J @ qd


def point_map(model: RobotModel, link: int, offset: float) -> DifferentialMap:
    """Differential map from joint space to the world position of a link point."""
    _check_point(model, link, offset)
    lengths, base = model.link_lengths, model.base_pose
    link, offset = int(link), float(offset)

    def phi(q):
        q = _q(model, q)
        return kernels.point_kinematics(q, np.zeros_like(q), lengths, base, link, offset)[0]

    def jac(q):
        q = _q(model, q)
        return kernels.point_kinematics(q, np.zeros_like(q), lengths, base, link, offset)[1]

    def jdqd(q, qd):
        q = _q(model, q)
        return kernels.point_kinematics(q, np.asarray(qd, dtype=float), lengths, base, link, offset)[2]

    return DifferentialMap(model.dof, 2, phi, jac, jdqd)


def collision_spheres(model: RobotModel, state: RobotState):
    """``(center, velocity, radius)`` for every sphere in the layout, in layout order."""
    q = _q(model, state.q)
    if not model.sphere_layout:
        return []
    C, V = kernels.sphere_states(q, state.qd, model.link_lengths, model.base_pose,
                                 model.sphere_links, model.sphere_offsets)
    return [(C[a], V[a], r) for a, r in enumerate(model.sphere_radii)]


def _dls(model, target, q, damping, iters, tol):
    zero = np.zeros(model.dof)
    for _ in range(iters):
        p, J, _ = kernels.point_kinematics(q, zero, model.link_lengths, model.base_pose,
                                           model.dof - 1, 1.0)
        err = target - p
        if err @ err < tol * tol:
            break
        dq = J.T @ np.linalg.solve(J @ J.T + damping * np.eye(2), err)
        q = np.clip(q + dq, model.lower, model.upper)
    return q


def inverse_kinematics(model: RobotModel, target, q0=None, damping: float = 1e-3,
                       iters: int = 200, tol: float = 1e-10, restarts: int = 16) -> np.ndarray:
    """Damped least-squares IK for the end effector, clipped to the joint limits.

    Starts from ``q0`` (default: 0.3 rad on every joint); if that stalls, retries
    from ``restarts`` seeded random configurations. Returns the best
    configuration found; check ``end_effector`` if the target may be out of reach.
    """
    target = np.asarray(target, dtype=float).reshape(2)
    starts = [np.full(model.dof, 0.3) if q0 is None else _q(model, q0).copy()]
    rng = np.random.default_rng(0)
    starts += [rng.uniform(model.lower, model.upper) for _ in range(restarts)]
    best, best_err = None, np.inf
    for q in starts:
        q = _dls(model, target, q, damping, iters, tol)
        err = float(np.linalg.norm(end_effector(model, q) - target))
        if err < best_err:
            best, best_err = q, err
        if err < tol:
            break
    return best
