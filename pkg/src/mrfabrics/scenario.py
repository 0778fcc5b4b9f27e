"""Scenario files: a line-oriented block format for robots, goals and planner settings.

The grammar is documented in ``docs/scenario_format.md``. Parsing produces a
:class:`Scenario`; goals declared ``random`` stay unresolved until
:meth:`Scenario.realize` samples them from a seed.
"""
from __future__ import annotations

import shlex
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .fabric import Obstacles, PlannerParams
from .kinematics import (DEFAULT_OFFSETS, DEFAULT_RADIUS, RobotModel, RobotState, end_effector,
                         inverse_kinematics)
from .resolution import ResolutionConfig
from .rollout import Mode, RolloutConfig

DEFAULT_DWELL = 0.2
DEFAULT_T_MAX = 70.0
DEFAULT_DT = 0.01
MAX_SAMPLES = 10_000


@dataclass(frozen=True)
class Goal:
    """A reach target held for ``dwell`` seconds; ``position`` is None until sampled."""

    position: np.ndarray | None
    dwell: float = DEFAULT_DWELL

    @property
    def is_random(self) -> bool:
        return self.position is None


@dataclass(frozen=True)
class RobotSpec:
    model: RobotModel
    start: RobotState
    goals: tuple
    settings: dict = field(default_factory=dict)
    region: tuple | None = None
    reach_band: tuple | None = None

    def params(self, goal) -> PlannerParams:
        return PlannerParams(np.asarray(goal, dtype=float), **self.settings)

    def sample_goal(self, rng: np.random.Generator) -> np.ndarray:
        if self.region is None:
            raise ConfigError(f"robot {self.model.name!r} has a random goal but no region")
        x0, y0, x1, y1 = self.region
        r_lo, r_hi = self.reach_band or (0.0, self.model.reach)
        base = self.model.base_pose[:2]
        for _ in range(MAX_SAMPLES):
            g = np.array([rng.uniform(x0, x1), rng.uniform(y0, y1)])
            r = np.linalg.norm(g - base)
            if r_lo <= r <= min(r_hi, self.model.reach):
                return g
        raise ConfigError(f"robot {self.model.name!r}: no reachable point in region {self.region}")


@dataclass(frozen=True)
class Scenario:
    robots: tuple
    static: Obstacles = field(default_factory=Obstacles)
    rollout: RolloutConfig = field(default_factory=RolloutConfig)
    resolution: ResolutionConfig = field(default_factory=ResolutionConfig)
    t_max: float = DEFAULT_T_MAX
    seed: int = 0
    comm_period: int = 1
    name: str = ""

    def __post_init__(self):
        if not self.robots:
            raise ConfigError("scenario needs at least one robot")
        if self.t_max <= 0:
            raise ConfigError("t_max must be positive")
        if self.comm_period < 1:
            raise ConfigError("comm_period must be >= 1")

    @property
    def dt(self) -> float:
        return self.rollout.dt

    @property
    def models(self) -> list:
        return [r.model for r in self.robots]

    @property
    def has_random_goals(self) -> bool:
        return any(g.is_random for r in self.robots for g in r.goals)

    def realize(self, seed: int | None = None) -> "Scenario":
        """Copy with every random goal sampled from ``seed`` (default: the scenario seed)."""
        seed = self.seed if seed is None else seed
        rng = np.random.default_rng(seed)
        robots = []
        for r in self.robots:
            goals = tuple(Goal(r.sample_goal(rng), g.dwell) if g.is_random else g for g in r.goals)
            robots.append(replace(r, goals=goals))
        return replace(self, robots=tuple(robots), seed=seed)

    def with_overrides(self, mode=None, horizon=None, seed=None) -> "Scenario":
        out = self
        if mode is not None or horizon is not None:
            kw = {}
            try:
                if mode is not None:
                    kw["mode"] = Mode.parse(mode)
                if horizon is not None:
                    kw["K"] = int(horizon)
                out = replace(out, rollout=replace(out.rollout, **kw))
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        if seed is not None:
            out = replace(out, seed=int(seed), resolution=replace(out.resolution, seed=int(seed)))
        return out


# -- parsing -----------------------------------------------------------------

_PARAM_KEYS = {
    "attractor_weight": "attractor_weight", "gamma": "attractor_weight",
    "damping": "damping", "collision_gain": "collision_gain", "limit_gain": "limit_gain",
    "goal_tolerance": "goal_tolerance",
}
_ROLLOUT_KEYS = {"k": "K", "horizon": "K", "v_d_min": "v_d_min", "d_ee_c": "d_ee_c",
                 "t_d_min": "t_d_min", "h": "H", "mode": "mode"}
_RESOLUTION_KEYS = {"gamma_high": "gamma_high", "retreat": "retreat", "seed": "seed",
                    "tie_tol": "tie_tol"}


class _Lines:
    def __init__(self, text: str):
        self.items = []
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if line:
                try:
                    toks = shlex.split(line)
                except ValueError as exc:
                    raise ConfigError(f"line {n}: {exc}") from None
                self.items.append((n, toks))
        self.pos = 0

    def __iter__(self):
        return self

    def __next__(self):
        if self.pos >= len(self.items):
            raise StopIteration
        self.pos += 1
        return self.items[self.pos - 1]


def _floats(n, toks, count=None, what=""):
    try:
        vals = [float(t) for t in toks]
    except ValueError:
        raise ConfigError(f"line {n}: expected numbers for {what or 'value'}, got {' '.join(toks)}") \
            from None
    if count is not None and len(vals) != count:
        raise ConfigError(f"line {n}: {what} takes {count} number(s), got {len(vals)}")
    if not all(np.isfinite(vals)):
        raise ConfigError(f"line {n}: non-finite value in {what}")
    return vals


def _int(n, tok, what):
    try:
        return int(tok)
    except ValueError:
        raise ConfigError(f"line {n}: {what} must be an integer, got {tok!r}") from None


def _keyed_block(lines, keys, what):
    """Parse ``key value...`` lines until ``end``; returns ``{field: (line, tokens)}``."""
    out = {}
    for n, toks in lines:
        key = toks[0].lower()
        if key == "end":
            return out
        if key not in keys:
            raise ConfigError(f"line {n}: unknown key {toks[0]!r} in {what} block")
        if len(toks) < 2:
            raise ConfigError(f"line {n}: {toks[0]} needs a value")
        out[keys[key]] = (n, toks[1:])
    raise ConfigError(f"{what} block not closed with 'end'")


def _params_block(lines):
    raw = _keyed_block(lines, _PARAM_KEYS, "params")
    out = {}
    for k, (n, vals) in raw.items():
        nums = _floats(n, vals, what=k)
        if k == "damping":
            out[k] = nums[0] if len(nums) == 1 else np.diag(nums)
        else:
            if len(nums) != 1:
                raise ConfigError(f"line {n}: {k} takes one number")
            out[k] = nums[0]
    return out


def _robot_block(lines, start_line, name, defaults):
    base = (0.0, 0.0, 0.0)
    links = None
    limits = None
    joint_limits = {}
    sphere_offsets, sphere_radius, explicit = None, None, []
    start = start_ee = None
    goals, region, band, settings = [], None, None, {}
    for n, toks in lines:
        key = toks[0].lower()
        args = toks[1:]
        if key == "end":
            break
        if key == "base":
            base = tuple(_floats(n, args, 3, "base"))
        elif key == "links":
            links = _floats(n, args, what="links")
        elif key == "limits":
            limits = _floats(n, args, 2, "limits")
        elif key == "limit":
            if len(args) != 3:
                raise ConfigError(f"line {n}: limit takes a joint index and two numbers")
            joint_limits[_int(n, args[0], "joint index")] = (n, _floats(n, args[1:], 2, "limit"))
        elif key == "spheres":
            if len(args) < 2:
                raise ConfigError(f"line {n}: spheres takes a radius and at least one offset")
            vals = _floats(n, args, what="spheres")
            sphere_radius, sphere_offsets = vals[0], vals[1:]
        elif key == "sphere":
            if len(args) != 3:
                raise ConfigError(f"line {n}: sphere takes link, offset and radius")
            explicit.append((_int(n, args[0], "sphere link"), *_floats(n, args[1:], 2, "sphere")))
        elif key == "start":
            start = (n, _floats(n, args, what="start"))
        elif key == "start_ee":
            if len(args) < 2:
                raise ConfigError(f"line {n}: start_ee takes x y and an optional seed configuration")
            start_ee = (n, _floats(n, args, what="start_ee"))
        elif key == "goal":
            if args and args[0].lower() == "random":
                dwell = _floats(n, args[1:], what="dwell") if len(args) > 1 else [DEFAULT_DWELL]
                goals.append(Goal(None, dwell[0]))
            else:
                if len(args) not in (2, 3):
                    raise ConfigError(f"line {n}: goal takes x y [dwell] or 'random' [dwell]")
                vals = _floats(n, args, what="goal")
                goals.append(Goal(np.array(vals[:2]), vals[2] if len(vals) == 3 else DEFAULT_DWELL))
            if goals[-1].dwell < 0:
                raise ConfigError(f"line {n}: dwell must be >= 0")
        elif key == "region":
            region = tuple(_floats(n, args, 4, "region"))
            if region[0] >= region[2] or region[1] >= region[3]:
                raise ConfigError(f"line {n}: region needs xmin < xmax and ymin < ymax")
        elif key == "reach":
            band = tuple(_floats(n, args, 2, "reach"))
            if not 0 <= band[0] < band[1]:
                raise ConfigError(f"line {n}: reach needs 0 <= min < max")
        elif key == "params":
            settings.update(_params_block(lines))
        else:
            raise ConfigError(f"line {n}: unknown key {toks[0]!r} in robot block")
    else:
        raise ConfigError(f"line {start_line}: robot block not closed with 'end'")

    if links is None:
        raise ConfigError(f"line {start_line}: robot block needs 'links'")
    dof = len(links)
    lim = np.tile(limits if limits is not None else [-2.6, 2.6], (dof, 1))
    for j, (n, pair) in joint_limits.items():
        if not 0 <= j < dof:
            raise ConfigError(f"line {n}: joint {j} out of range")
        lim[j] = pair
    if explicit:
        layout = tuple(explicit)
    else:
        offs = sphere_offsets if sphere_offsets is not None else DEFAULT_OFFSETS
        rad = sphere_radius if sphere_radius is not None else DEFAULT_RADIUS
        layout = tuple((k, o, rad) for k in range(dof) for o in offs)
    try:
        model = RobotModel(np.array(links), np.array(base), lim, layout, name)
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"line {start_line}: robot {name!r}: {exc}") from None

    if start is not None and start_ee is not None:
        raise ConfigError(f"line {start_ee[0]}: give either start or start_ee, not both")
    if start is not None:
        n, q = start
        if len(q) != dof:
            raise ConfigError(f"line {n}: start has {len(q)} values for a {dof}-joint robot")
        state = RobotState.at_rest(q)
    elif start_ee is not None:
        n, vals = start_ee
        seed_q = vals[2:] or None
        if seed_q is not None and len(seed_q) != dof:
            raise ConfigError(f"line {n}: start_ee seed has {len(seed_q)} values, need {dof}")
        q = inverse_kinematics(model, vals[:2], seed_q)
        if np.linalg.norm(end_effector(model, q) - vals[:2]) > 1e-6:
            raise ConfigError(f"line {n}: start_ee {vals[:2]} is not reachable")
        state = RobotState.at_rest(q)
    else:
        state = RobotState.at_rest(np.zeros(dof))
    if not goals:
        raise ConfigError(f"line {start_line}: robot {name!r} has no goals")
    merged = {**defaults, **settings}
    try:
        PlannerParams(np.zeros(2), **merged)
    except ValueError as exc:
        raise ConfigError(f"line {start_line}: robot {name!r}: {exc}") from None
    if any(g.is_random for g in goals) and region is None:
        raise ConfigError(f"line {start_line}: robot {name!r} has random goals but no region")
    return RobotSpec(model, state, tuple(goals), merged, region, band)


def parse_scenario(text: str, name: str = "") -> Scenario:
    lines = _Lines(text)
    pending = []
    defaults = {}
    rollout_kw, resolution_kw = {}, {}
    top = {"dt": DEFAULT_DT, "t_max": DEFAULT_T_MAX, "seed": 0, "comm_period": 1}
    obstacles = []
    for n, toks in lines:
        key = toks[0].lower()
        args = toks[1:]
        if key == "robot":
            rname = args[0] if args else f"robot{len(pending)}"
            # robot blocks are resolved after the whole file so top-level params apply to all
            body = []
            depth = 1
            for m, t in lines:
                k = t[0].lower()
                if k == "params":
                    depth += 1
                elif k == "end":
                    depth -= 1
                body.append((m, t))
                if depth == 0:
                    break
            else:
                raise ConfigError(f"line {n}: robot block not closed with 'end'")
            pending.append((n, rname, body))
        elif key == "params":
            defaults.update(_params_block(lines))
        elif key == "rollout":
            for k, (m, vals) in _keyed_block(lines, _ROLLOUT_KEYS, "rollout").items():
                if k == "mode":
                    rollout_kw[k] = (m, vals[0])
                elif k in ("K", "H"):
                    rollout_kw[k] = (m, _int(m, vals[0], k))
                else:
                    rollout_kw[k] = (m, _floats(m, vals, 1, k)[0])
        elif key == "resolution":
            for k, (m, vals) in _keyed_block(lines, _RESOLUTION_KEYS, "resolution").items():
                resolution_kw[k] = (m, _int(m, vals[0], k) if k == "seed"
                                    else _floats(m, vals, 1, k)[0])
        elif key in ("dt", "t_max"):
            top[key] = _floats(n, args, 1, key)[0]
        elif key in ("seed", "comm_period"):
            if len(args) != 1:
                raise ConfigError(f"line {n}: {key} takes one integer")
            top[key] = _int(n, args[0], key)
        elif key == "name":
            name = " ".join(args)
        elif key == "obstacle":
            x, y, r = _floats(n, args, 3, "obstacle")
            if r <= 0:
                raise ConfigError(f"line {n}: obstacle radius must be positive")
            obstacles.append((np.array([x, y]), r))
        elif key == "end":
            raise ConfigError(f"line {n}: 'end' without an open block")
        else:
            raise ConfigError(f"line {n}: unknown top-level key {toks[0]!r}")

    robots = [_robot_block(iter(body), n, rname, defaults) for n, rname, body in pending]
    if not robots:
        raise ConfigError("scenario declares no robots")
    try:
        rollout = RolloutConfig(dt=top["dt"], **{k: v for k, (_, v) in rollout_kw.items()})
    except ValueError as exc:
        line = min((m for m, _ in rollout_kw.values()), default=0)
        raise ConfigError(f"line {line}: rollout: {exc}") from None
    try:
        resolution = ResolutionConfig(**{k: v for k, (_, v) in resolution_kw.items()})
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"resolution: {exc}") from None
    return Scenario(tuple(robots), Obstacles.from_list(obstacles), rollout, resolution,
                    top["t_max"], top["seed"], top["comm_period"], name)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from None
    return parse_scenario(text, name=path.stem)
