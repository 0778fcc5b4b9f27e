"""Deadlock resolution: priority hierarchy, retreat goals, attractor boost and release."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidState
from .fabric import GAMMA_HIGH

RETREAT_DISTANCE = 0.3
TIE_TOLERANCE = 1e-6


@dataclass(frozen=True)
class ResolutionConfig:
    gamma_high: float = GAMMA_HIGH
    retreat: float = RETREAT_DISTANCE
    seed: int = 0
    tie_tol: float = TIE_TOLERANCE

    def __post_init__(self):
        if self.gamma_high < 0 or self.retreat <= 0 or self.tie_tol < 0:
            raise ValueError("need gamma_high >= 0, retreat > 0 and tie_tol >= 0")


@dataclass
class ResolutionState:
    """Who is resolving, in what order, and the parameters to restore afterwards.

    ``saved_params`` maps robot id to its parameters from before activation and
    is non-empty exactly while ``active``.
    """

    active: bool = False
    priority_order: list = field(default_factory=list)
    saved_params: dict = field(default_factory=dict)
    activation_time: float = 0.0
    rng_seed: int = 0
    involved: tuple = ()

    def __post_init__(self):
        self.rng = np.random.default_rng(self.rng_seed)

    @property
    def high_priority(self) -> int | None:
        return self.priority_order[0] if self.priority_order else None


def assign_priority(ee_positions, goals, rng=None, robots=None, tie_tol: float = TIE_TOLERANCE):
    """Order robots by ascending end-effector distance to their own goal.

    Groups of distances within ``tie_tol`` of each other are ordered by ``rng``
    (a seed or a ``numpy.random.Generator``); identical seeds give identical orders.
    """
    X = np.asarray(ee_positions, dtype=float)
    G = np.asarray(goals, dtype=float)
    robots = list(range(len(X))) if robots is None else [int(r) for r in robots]
    dist = {r: float(np.linalg.norm(X[r] - G[r])) for r in robots}
    ranked = sorted(robots, key=lambda r: (dist[r], r))
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    order, start = [], 0
    while start < len(ranked):
        stop = start + 1
        while stop < len(ranked) and dist[ranked[stop]] - dist[ranked[stop - 1]] <= tie_tol:
            stop += 1
        group = ranked[start:stop]
        if len(group) > 1:
            group = [group[j] for j in rng.permutation(len(group))]
        order.extend(group)
        start = stop
    return order


def retreat_goal(ee_low, goal_high, distance: float = RETREAT_DISTANCE) -> np.ndarray:
    """Point ``distance`` beyond ``ee_low`` on the ray from ``goal_high`` through ``ee_low``."""
    ee_low = np.asarray(ee_low, dtype=float)
    u = ee_low - np.asarray(goal_high, dtype=float)
    n = np.linalg.norm(u)
    if n < 1e-12:
        # sitting on the contested goal: no preferred direction, back off along +y
        u, n = np.array([0.0, 1.0]), 1.0
    return ee_low + distance * u / n


def apply_resolution(state: ResolutionState, order, params, ee_positions,
                     config: ResolutionConfig = ResolutionConfig(), deadlock: bool = True,
                     time: float = 0.0):
    """Boost the top-priority robot and send the others away from its goal.

    ``params`` is the per-robot list of current parameters; a new list is
    returned. Robots outside ``order`` keep their parameters.
    """
    if not deadlock:
        raise InvalidState("resolution requested without a detected deadlock")
    if state.active:
        raise InvalidState("resolution already active")
    order = [int(r) for r in order]
    if len(order) < 2:
        raise InvalidState("resolution needs at least two robots")
    params = list(params)
    X = np.asarray(ee_positions, dtype=float)
    high = order[0]
    goal_high = params[high].goal
    state.saved_params = {r: params[r] for r in order}
    params[high] = params[high].with_weight(config.gamma_high)
    for r in order[1:]:
        params[r] = params[r].with_goal(retreat_goal(X[r], goal_high, config.retreat))
    state.active = True
    state.priority_order = order
    state.involved = tuple(sorted(order))
    state.activation_time = float(time)
    return params


def check_release(v_bar, elapsed: float, ee_positions, original_goals, config,
                  involved=None, goal_tolerance: float | None = None) -> bool:
    """Release once the involved robots move freely for long enough, or one reaches its goal.

    ``config`` supplies ``v_d_min`` and ``t_d_min`` (a :class:`RolloutConfig`).
    """
    v_bar = np.asarray(v_bar, dtype=float)
    X = np.asarray(ee_positions, dtype=float)
    G = np.asarray(original_goals, dtype=float)
    involved = list(range(len(v_bar))) if involved is None else list(involved)
    tol = 0.02 if goal_tolerance is None else goal_tolerance
    moving = all(v_bar[r] > config.v_d_min for r in involved) and elapsed >= config.t_d_min
    arrived = any(np.linalg.norm(X[r] - G[r]) < tol for r in involved)
    return bool(moving or arrived)


def release(state: ResolutionState, params):
    """Restore the saved parameters and deactivate; returns the new parameter list."""
    if not state.active:
        raise InvalidState("no active resolution to release")
    params = list(params)
    for r, p in state.saved_params.items():
        params[r] = p
    state.active = False
    state.saved_params = {}
    state.priority_order = []
    state.involved = ()
    return params


def deadlock_groups(pairs):
    """Connected components of the deadlock pair graph, each sorted."""
    parent = {}

    def find(a):
        parent.setdefault(a, a)
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in pairs:
        parent[find(a)] = find(b)
    groups = {}
    for a in list(parent):
        groups.setdefault(find(a), []).append(a)
    return sorted(sorted(g) for g in groups.values())


__all__ = ["ResolutionConfig", "ResolutionState", "assign_priority", "retreat_goal",
           "apply_resolution", "check_release", "release", "deadlock_groups"]
