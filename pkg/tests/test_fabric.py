import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import checks
import oracles
from mrfabrics import (GradientSingularity, NonpositiveDistance, Obstacles, PlannerParams,
                       SingularMetric, build_policy, desk_robot, end_effector)
from mrfabrics import kernels
from mrfabrics.fabric import (GAMMA_LOW, attractor, avoidance_geometry, clearance_map,
                              distance_map, limit_geometry, raise_for_status)
from mrfabrics.kinematics import point_map
from mrfabrics.rollout import integrate
from mrfabrics.specs import zero_spec


def g1(geom, d, dd):
    return float(geom(np.array([d]), np.array([dd]))[0])


# -- barrier components --------------------------------------------------------

def test_barrier_switches_off_when_receding():
    geom, _ = avoidance_geometry(1.0)
    assert g1(geom, 0.5, 0.5) == 0.0
    assert g1(geom, 0.5, 0.0) == 0.0


def test_barrier_value_when_approaching():
    geom, _ = avoidance_geometry(1.0)
    assert g1(geom, 0.5, -1.0) == pytest.approx(-4.0, abs=1e-15)
    # negative h means positive acceleration: one explicit step pushes d back up
    d, dd = 0.5, -1.0
    ddd = -g1(geom, d, dd)
    assert ddd > 0 and integrate(d, dd, ddd, 0.01)[1] > dd


@settings(max_examples=50, deadline=None)
@given(d=st.floats(0.01, 2.0), dd=st.floats(-5.0, -1e-3), gain=st.floats(0.1, 5.0))
def test_barrier_doubling_speed_quadruples_h(d, dd, gain):
    geom, _ = avoidance_geometry(gain)
    assert g1(geom, d, 2 * dd) == pytest.approx(4 * g1(geom, d, dd), rel=1e-12)


def test_barrier_energy_metric_and_force():
    _, lag = avoidance_geometry(1.0)
    d, dd = np.array([0.25]), np.array([-2.0])
    assert lag.metric(d, dd)[0, 0] == pytest.approx(4.0)
    assert lag.force(d, dd)[0] == pytest.approx(-0.5 * 4.0 / 0.0625)
    assert lag.energy(d, dd) == pytest.approx(0.5 * 4.0 * 4.0)


def test_barrier_rejects_interpenetration():
    geom, lag = avoidance_geometry(1.0)
    with pytest.raises(NonpositiveDistance):
        geom(np.array([0.0]), np.array([-1.0]))
    with pytest.raises(NonpositiveDistance):
        lag.metric(np.array([-0.1]), np.array([0.0]))
    with pytest.raises(ValueError):
        avoidance_geometry(0.0)


def test_limit_barrier_values():
    geom, _ = limit_geometry(1.0)
    assert g1(geom, 0.1, -1.0) == pytest.approx(-100.0)
    # centred and at rest: both margins inactive
    assert g1(geom, 1.0, 0.0) == 0.0 and g1(geom, 1.0, -0.0) == 0.0
    with pytest.raises(ValueError):
        limit_geometry(-1.0)


# -- distance map ------------------------------------------------------------

def test_clearance_between_two_spheres():
    m = clearance_map(np.zeros(2), 0.2)
    assert m.phi(np.array([1.0, 0.0]))[0] == pytest.approx(0.8)
    assert m.phi(np.array([0.15, 0.0]))[0] < 0


def test_distance_map_jacobian_matches_finite_differences(rng):
    model = desk_robot()
    sphere = point_map(model, 2, 0.83)
    dmap = distance_map(sphere, np.array([0.2, 0.7]), 0.08, 0.1)
    for _ in range(50):
        q = rng.uniform(-2.5, 2.5, 3)
        J_fd = oracles.fd_jacobian(lambda z: dmap.phi(z), q)
        np.testing.assert_allclose(dmap.jacobian(q), J_fd, atol=1e-5)


def test_distance_map_errors():
    with pytest.raises(GradientSingularity):
        clearance_map(np.zeros(2), 0.1).jacobian(np.zeros(2))
    with pytest.raises(ValueError):
        distance_map(point_map(desk_robot(), 0, 0.5), np.zeros(2), 0.0, 0.1)


# -- attractor ----------------------------------------------------------------

def test_attractor_gradient_vanishes_at_goal():
    a = attractor([0.3, 0.4])
    np.testing.assert_array_equal(a.gradient([0.3, 0.4]), [0.0, 0.0])


def test_attractor_gradient_bounds():
    a = attractor([0.0, 0.0], scale=1.0)
    for r in np.linspace(0.0, 3.0, 301):
        for th in np.linspace(0, 2 * np.pi, 12, endpoint=False):
            g = np.linalg.norm(a.gradient([r * np.cos(th), r * np.sin(th)]))
            assert g <= 1.0 + 1e-15
            if r > 0.5:
                assert g >= 0.9


def test_attractor_gradient_matches_finite_differences(rng):
    a = attractor([0.1, -0.2])
    for _ in range(200):
        x = rng.normal(scale=0.5, size=2) + a.goal
        np.testing.assert_allclose(a.gradient(x), oracles.fd_jacobian(a.potential, x)[0],
                                   atol=1e-6)


def test_attractor_rejects_negative_weight():
    with pytest.raises(ValueError):
        attractor([0, 0], -1.0)


# -- parameters -------------------------------------------------------------

def test_params_validation():
    PlannerParams(np.zeros(2), damping=np.diag([1.0, 2.0, 3.0]))
    with pytest.raises(ValueError):
        PlannerParams(np.zeros(2), damping=np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        PlannerParams(np.zeros(2), damping=np.diag([1.0, -1.0]))
    with pytest.raises(ValueError):
        PlannerParams(np.zeros(2), damping=-0.1)
    with pytest.raises(ValueError):
        PlannerParams(np.zeros(2), attractor_weight=-1)
    with pytest.raises(ValueError):
        PlannerParams(np.zeros(2), collision_gain=0)
    p = PlannerParams(np.zeros(2))
    assert p.attractor_weight == GAMMA_LOW
    np.testing.assert_array_equal(p.damping_matrix(3), p.damping * np.eye(3))
    assert p.with_weight(3.0).attractor_weight == 3.0 and p.attractor_weight == GAMMA_LOW


# -- the policy ---------------------------------------------------------------

def test_equilibrium_at_goal():
    model = desk_robot()
    q = np.array([0.4, -0.7, 0.9])
    policy = build_policy(model, PlannerParams(end_effector(model, q)))
    np.testing.assert_array_equal(policy(q, np.zeros(3)), np.zeros(3))


def test_forced_policy_formula(rng):
    """q̈ = -M⁻¹(f + γ Jᵀ ∂ψ + B q̇) assembled from the spec algebra agrees with the kernel."""
    model = desk_robot()
    for _ in range(100):
        params = PlannerParams(rng.uniform(-0.5, 0.5, 2), attractor_weight=rng.uniform(0, 3),
                               damping=np.diag(rng.uniform(0, 3, 3)),
                               collision_gain=rng.uniform(0.5, 2), limit_gain=rng.uniform(0.5, 2))
        policy = build_policy(model, params)
        obs = Obstacles.from_list([(rng.uniform(0.9, 1.5, 2), rng.normal(size=2), 0.1),
                                   (-rng.uniform(0.9, 1.5, 2), np.zeros(2), 0.05)])
        q, qd = rng.uniform(-2.0, 2.0, 3), rng.normal(size=3)
        want = policy.reference(q, qd, obs)
        np.testing.assert_allclose(policy(q, qd, obs), want, atol=1e-9 * (1 + np.abs(want).max()))


def test_zero_component_leaves_policy_unchanged(rng):
    model = desk_robot()
    policy = build_policy(model, PlannerParams(np.array([0.2, 0.5])))
    q, qd = rng.uniform(-1, 1, 3), rng.normal(size=3)
    np.testing.assert_array_equal(policy.reference(q, qd, extra=[zero_spec(3)]),
                                  policy.reference(q, qd))


def test_unforced_undamped_policy_conserves_energy():
    assert checks.policy_energy_drift(steps=2000, dt=5e-4) < 1e-3


def test_policy_is_deterministic(rng):
    policy = build_policy(desk_robot(), PlannerParams(np.array([0.2, 0.5])))
    q, qd = rng.uniform(-1, 1, 3), rng.normal(size=3)
    a, b = policy(q, qd), policy(q, qd)
    assert a.tobytes() == b.tobytes()


def _simulate(policy, q, obs=None, T=20.0, dt=0.01):
    qd = np.zeros_like(q)
    traj = [q]
    for _ in range(int(T / dt)):
        q, qd = integrate(q, qd, policy(q, qd, obs), dt)
        traj.append(q)
    return np.array(traj)


def test_damped_convergence_from_random_starts(rng):
    model = desk_robot()
    goal = np.array([0.45, 0.45])
    policy = build_policy(model, PlannerParams(goal, damping=3.0))
    for _ in range(5):
        traj = _simulate(policy, rng.uniform(-1.5, 1.5, 3), T=25.0)
        assert np.linalg.norm(end_effector(model, traj[-1]) - goal) < 0.02
        assert np.all(traj > model.lower) and np.all(traj < model.upper)


def test_static_obstacle_is_avoided():
    model = desk_robot()
    goal = np.array([0.1, 0.75])
    policy = build_policy(model, PlannerParams(goal, damping=3.0))
    converged = 0
    for centre in ([0.55, 0.45], [0.75, 0.3], [0.3, 0.6], [0.7, 0.05]):
        obs = Obstacles.from_list([(np.array(centre), 0.08)])
        traj = _simulate(policy, np.array([-0.3, 0.2, 0.1]), obs, T=30.0)
        clear = min(np.linalg.norm(point_map(model, k, o).phi(q) - obs.centers[0]) - r - 0.08
                    for q in traj[::5] for k, o, r in model.sphere_layout)
        assert clear > 0, centre
        converged += np.linalg.norm(end_effector(model, traj[-1]) - goal) < 0.02
    # an obstacle may trap the arm in a local minimum, but not in every placement
    assert converged >= 1


def test_joint_limits_hold_under_strong_pull():
    # a goal behind the base drags joint 0 towards its limit
    model = desk_robot()
    policy = build_policy(model, PlannerParams(np.array([-0.6, -0.1]), attractor_weight=3.0))
    traj = _simulate(policy, np.array([2.0, 0.3, 0.3]), T=15.0)
    assert np.all(traj > model.lower) and np.all(traj < model.upper)


def test_status_codes_map_to_errors():
    raise_for_status(kernels.OK, 0, 3)
    raise_for_status(kernels.REGULARIZED, 0, 3)
    with pytest.raises(GradientSingularity) as exc:
        raise_for_status(kernels.GRADIENT_SINGULAR, 7, 3, robot=1, step=4)
    assert (exc.value.sphere, exc.value.robot, exc.value.step) == (2, 1, 4)
    with pytest.raises(SingularMetric):
        raise_for_status(kernels.METRIC_SINGULAR, 0, 3)


def test_coincident_obstacle_raises_with_sphere_index():
    model = desk_robot()
    policy = build_policy(model, PlannerParams(np.array([0.5, 0.5])))
    q = np.array([0.3, 0.2, -0.1])
    centre = point_map(model, 1, 0.83).phi(q)
    with pytest.raises(GradientSingularity) as exc:
        policy(q, np.zeros(3), Obstacles.from_list([(centre, 0.05)]))
    assert exc.value.sphere == 3
