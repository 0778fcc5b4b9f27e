"""Spectral semi-sprays and the operations that compose them.

A spec is a pair ``(M, f)`` evaluated at a state ``(x, xd)`` and stands for
the second-order system ``M(x, xd) @ xdd + f(x, xd) = 0``. Specs here are
thin wrappers around pure evaluation functions; every operation returns a new
spec whose evaluator closes over its inputs, so composition is lazy and the
algebra stays closed.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DegenerateVelocity, DimensionMismatch, SingularMetric

ENERGY_TOL = 1e-12
COND_LIMIT = 1e12
SYMMETRY_TOL = 1e-12

EvalFn = Callable[[np.ndarray, np.ndarray], tuple]


def _vec(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


def check_invertible(M: np.ndarray) -> None:
    if not np.all(np.isfinite(M)) or np.linalg.cond(M) > COND_LIMIT:
        raise SingularMetric(f"metric condition number exceeds {COND_LIMIT:g}")


@dataclass(frozen=True)
class Spec:
    """Second-order system ``M xdd + f = 0`` on a ``dim``-dimensional manifold."""

    dim: int
    eval_fn: EvalFn

    def __call__(self, x, xd):
        M, f = self.eval_fn(_vec(x), _vec(xd))
        return np.atleast_2d(np.asarray(M, dtype=float)), _vec(f)

    def acceleration(self, x, xd) -> np.ndarray:
        """Solve the system for ``xdd``."""
        M, f = self(x, xd)
        check_invertible(M)
        return -np.linalg.solve(M, f)

    def __add__(self, other: "Spec") -> "Spec":
        return add(self, other)


def validate(spec: Spec, x, xd) -> None:
    """Raise if the metric at ``(x, xd)`` is asymmetric or singular."""
    M, _ = spec(x, xd)
    if np.max(np.abs(M - M.T)) > SYMMETRY_TOL:
        raise ValueError("spec metric is not symmetric")
    check_invertible(M)


def zero_spec(dim: int) -> Spec:
    return Spec(dim, lambda x, xd: (np.zeros((dim, dim)), np.zeros(dim)))


@dataclass(frozen=True)
class Geometry:
    """Geometry ``xdd + h(x, xd) = 0``; ``h`` must be homogeneous of degree 2 in ``xd``."""

    dim: int
    h: Callable[[np.ndarray, np.ndarray], np.ndarray]

    def __call__(self, x, xd) -> np.ndarray:
        return _vec(self.h(_vec(x), _vec(xd)))


@dataclass(frozen=True)
class EnergyLagrangian:
    """Energy Lagrangian with its equations of motion ``M_Le xdd + f_Le = 0``."""

    dim: int
    metric: Callable
    force: Callable
    energy: Callable

    def spec(self) -> Spec:
        """Equations of motion of the Lagrangian as a spec."""
        return Spec(self.dim, lambda x, xd: (self.metric(x, xd), self.force(x, xd)))

    @classmethod
    def euclidean(cls, dim: int, weight: float = 1.0) -> "EnergyLagrangian":
        return cls(
            dim,
            metric=lambda x, xd: weight * np.eye(dim),
            force=lambda x, xd: np.zeros(dim),
            energy=lambda x, xd: 0.5 * weight * float(np.dot(xd, xd)),
        )


@dataclass(frozen=True)
class DifferentialMap:
    """Smooth map ``x = phi(q)`` with Jacobian and the product ``Jdot @ qd``."""

    in_dim: int
    out_dim: int
    phi: Callable
    jacobian: Callable
    jdot_qdot: Callable

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise DimensionMismatch("map dimensions must be positive")

    @classmethod
    def identity(cls, dim: int) -> "DifferentialMap":
        return cls(
            dim,
            dim,
            phi=lambda q: _vec(q).copy(),
            jacobian=lambda q: np.eye(dim),
            jdot_qdot=lambda q, qd: np.zeros(dim),
        )


def compose(inner: DifferentialMap, outer: DifferentialMap) -> DifferentialMap:
    """Chain ``outer . inner``; the result maps ``inner``'s domain to ``outer``'s range."""
    if inner.out_dim != outer.in_dim:
        raise DimensionMismatch(f"cannot compose maps {inner.out_dim} -> {outer.in_dim}")

    def jac(q):
        return np.atleast_2d(outer.jacobian(inner.phi(q))) @ np.atleast_2d(inner.jacobian(q))

    def jdqd(q, qd):
        x = inner.phi(q)
        J_in = np.atleast_2d(inner.jacobian(q))
        xd = J_in @ qd
        return np.atleast_2d(outer.jacobian(x)) @ _vec(inner.jdot_qdot(q, qd)) + _vec(
            outer.jdot_qdot(x, xd)
        )

    return DifferentialMap(
        inner.in_dim, outer.out_dim, lambda q: _vec(outer.phi(inner.phi(q))), jac, jdqd
    )


@dataclass(frozen=True)
class RelativeMotionFrame:
    """Instantaneous position, velocity and acceleration of a moving reference.

    Values are bound when the frame is built (once per planning step); a zero
    acceleration is the common simplification for peers whose acceleration is
    not communicated.
    """

    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray

    @classmethod
    def moving(cls, position, velocity, acceleration=None) -> "RelativeMotionFrame":
        p = _vec(position)
        v = _vec(velocity)
        a = np.zeros_like(p) if acceleration is None else _vec(acceleration)
        return cls(p, v, a)

    @classmethod
    def static(cls, position) -> "RelativeMotionFrame":
        p = _vec(position)
        return cls(p, np.zeros_like(p), np.zeros_like(p))

    @property
    def dim(self) -> int:
        return self.position.shape[0]


def energize(geom: Geometry, lag: EnergyLagrangian, strict: bool = False) -> Spec:
    """Equip ``geom`` with the metric of ``lag``.

    The result has metric ``M_Le`` and force ``f_Le + P (M_Le h - f_Le)`` with
    ``P = I - M_Le xd xd^T / (xd^T M_Le xd)``. Below ``ENERGY_TOL`` the projector
    is undefined; the geometry is passed through unchanged (``f = M_Le h``)
    unless ``strict`` is set, in which case :class:`DegenerateVelocity` is raised.
    """
    if geom.dim != lag.dim:
        raise DimensionMismatch(f"geometry dim {geom.dim} != lagrangian dim {lag.dim}")

    def eval_fn(x, xd):
        M = np.atleast_2d(lag.metric(x, xd))
        check_invertible(M)
        fL = _vec(lag.force(x, xd))
        Mh = M @ geom(x, xd)
        Mxd = M @ xd
        e2 = float(xd @ Mxd)
        if e2 <= ENERGY_TOL:
            if strict:
                raise DegenerateVelocity(f"xd^T M xd = {e2:g} below {ENERGY_TOL:g}")
            return M, Mh
        r = Mh - fL
        return M, fL + r - Mxd * (xd @ r) / e2

    return Spec(geom.dim, eval_fn)


def weight(geom: Geometry, lag: EnergyLagrangian) -> Spec:
    """Geometry weighted by the Lagrangian's metric, ``(M_Le, M_Le h)``."""
    if geom.dim != lag.dim:
        raise DimensionMismatch(f"geometry dim {geom.dim} != lagrangian dim {lag.dim}")

    def eval_fn(x, xd):
        M = np.atleast_2d(lag.metric(x, xd))
        return M, M @ geom(x, xd)

    return Spec(geom.dim, eval_fn)


def pullback(dmap: DifferentialMap, spec: Spec) -> Spec:
    """Pull ``spec`` back through ``dmap`` to ``(J^T M J, J^T (f + M Jdot qd))``."""
    if dmap.out_dim != spec.dim:
        raise DimensionMismatch(f"map output dim {dmap.out_dim} != spec dim {spec.dim}")

    def eval_fn(q, qd):
        J = np.atleast_2d(dmap.jacobian(q))
        x = _vec(dmap.phi(q))
        M, f = spec(x, J @ qd)
        return J.T @ M @ J, J.T @ (f + M @ _vec(dmap.jdot_qdot(q, qd)))

    return Spec(dmap.in_dim, eval_fn)


def dynamic_pullback(frame: RelativeMotionFrame, spec_rel: Spec) -> Spec:
    """Move a spec on relative coordinates ``x - x_ref`` onto the absolute manifold."""
    if frame.dim != spec_rel.dim:
        raise DimensionMismatch(f"frame dim {frame.dim} != spec dim {spec_rel.dim}")

    def eval_fn(x, xd):
        M, f = spec_rel(x - frame.position, xd - frame.velocity)
        return M, f - M @ frame.acceleration

    return Spec(spec_rel.dim, eval_fn)


def add(a: Spec, b: Spec) -> Spec:
    if a.dim != b.dim:
        raise DimensionMismatch(f"cannot sum specs of dim {a.dim} and {b.dim}")

    def eval_fn(x, xd):
        Ma, fa = a(x, xd)
        Mb, fb = b(x, xd)
        return Ma + Mb, fa + fb

    return Spec(a.dim, eval_fn)


def sum_specs(specs, dim: int | None = None) -> Spec:
    """Sum an iterable of specs; an empty iterable needs ``dim`` and yields the zero spec."""
    specs = list(specs)
    if not specs:
        if dim is None:
            raise DimensionMismatch("empty spec sum needs an explicit dim")
        return zero_spec(dim)
    dims = {s.dim for s in specs}
    if len(dims) != 1 or (dim is not None and dims != {dim}):
        raise DimensionMismatch(f"inconsistent spec dims {sorted(dims)}")

    def eval_fn(x, xd):
        M = 0.0
        f = 0.0
        for s in specs:
            Ms, fs = s(x, xd)
            M = M + Ms
            f = f + fs
        return M, f

    return Spec(specs[0].dim, eval_fn)
