"""Multi-robot dynamic fabrics with rollout-based deadlock detection and resolution."""
from .errors import (ConfigError, DegenerateVelocity, DimensionMismatch, FabricError,
                     GradientSingularity, IndexOutOfRange, InvalidState, NonpositiveDistance,
                     SingularMetric)
from .fabric import FabricPolicy, Obstacles, PlannerParams, build_policy
from .harness import BatchResult, RunMetrics, TrajectoryLog, batch, bench_horizon, run
from .kernels import BACKEND
from .kinematics import RobotModel, RobotState, desk_robot, end_effector, inverse_kinematics
from .multi_robot import Fleet, FleetSnapshot, MrdfPlanner, plan_step, synchronous_step
from .resolution import (ResolutionConfig, ResolutionState, apply_resolution, assign_priority,
                         check_release, release)
from .rollout import (Mode, RolloutConfig, RolloutResult, detect_deadlock, estimate_goal,
                      extrapolate_stale, integrate, rollout)
from .scenario import Scenario, load_scenario, parse_scenario
from .specs import (DifferentialMap, EnergyLagrangian, Geometry, RelativeMotionFrame, Spec,
                    dynamic_pullback, energize, pullback, sum_specs)

__version__ = "0.1.0"
