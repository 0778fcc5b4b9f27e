"""Kernel dispatch: compiled numba kernels unless ``MRFABRICS_NO_NUMBA`` is set."""
import numpy as np

from ._jit import USE_NUMBA
from ._kernels_nb import (C_D_FLOOR, C_EPS, C_K_ATTR, C_LAM_M, C_SMOOTH, C_W_ATTR,
                          GRADIENT_SINGULAR, METRIC_SINGULAR, OK, REGULARIZED)

if USE_NUMBA:
    from . import _kernels_nb as _impl
else:
    from . import _kernels_np as _impl

BACKEND = "numba" if USE_NUMBA else "numpy"

point_kinematics = _impl.point_kinematics
sphere_states = _impl.sphere_states
policy_accel = _impl.policy_accel
fleet_sphere_states = _impl.fleet_sphere_states
fleet_accels = _impl.fleet_accels
rollout = _impl.rollout
fleet_end_effectors = _impl.fleet_end_effectors
min_clearances = _impl.min_clearances


def make_consts(lam_m=1.0, smoothing=0.1, k_attr=1.0, w_attr=1.0, d_floor=1e-3, eps=1e-9):
    c = np.zeros(6)
    c[C_LAM_M] = lam_m
    c[C_SMOOTH] = smoothing
    c[C_K_ATTR] = k_attr
    c[C_W_ATTR] = w_attr
    c[C_D_FLOOR] = d_floor
    c[C_EPS] = eps
    return c


__all__ = [
    "BACKEND", "OK", "REGULARIZED", "GRADIENT_SINGULAR", "METRIC_SINGULAR",
    "point_kinematics", "sphere_states", "policy_accel", "fleet_sphere_states",
    "fleet_accels", "rollout", "fleet_end_effectors", "min_clearances", "make_consts",
]
