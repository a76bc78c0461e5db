import math

import numpy as np
import pytest
from scipy.linalg import expm

from nmpc.dynamics import (
    ANGLE_CLAMPED,
    INPUT_CLAMPED,
    VELOCITY_CLAMPED,
    ControlInput,
    InvalidArgumentError,
    JointState,
    PlantConfig,
    continuous_model,
    discretize,
    plant_step,
    plant_step_joints,
    simulate_open_loop,
)

WIDE = PlantConfig(angle_limits=(-1e9, 1e9), velocity_limits=(-1e9, 1e9), input_limits=(-1e9, 1e9))


def test_discretize_closed_form():
    m = discretize(0.01)
    np.testing.assert_array_equal(m.Ad, [[1.0, 0.01], [0.0, 1.0]])
    np.testing.assert_allclose(m.Bd, [[5e-5], [0.01]], rtol=0, atol=1e-18)
    assert m.Ts == 0.01


@pytest.mark.parametrize("Ts", [0.0, -0.01, float("nan"), float("inf"), "abc"])
def test_discretize_rejects_bad_period(Ts):
    with pytest.raises(InvalidArgumentError):
        discretize(Ts)


def test_discretize_matches_matrix_exponential():
    A, B, _ = continuous_model()
    rng = np.random.default_rng(0)
    for Ts in rng.uniform(1e-4, 0.5, size=20):
        M = np.zeros((3, 3))
        M[:2, :2] = A
        M[:2, 2:] = B
        E = expm(M * Ts)
        m = discretize(Ts)
        np.testing.assert_allclose(m.Ad, E[:2, :2], rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(m.Bd, E[:2, 2:], rtol=1e-12, atol=1e-14)


def test_continuous_model_is_double_integrator():
    A, B, C = continuous_model()
    np.testing.assert_array_equal(A, [[0, 1], [0, 0]])
    np.testing.assert_array_equal(B, [[0], [1]])
    np.testing.assert_array_equal(C, np.eye(2))


def test_step_matches_analytic_solution():
    rng = np.random.default_rng(42)
    for _ in range(100):
        theta, omega, u = rng.uniform(-2, 2, size=3)
        Ts = rng.uniform(1e-3, 0.2)
        x = plant_step(JointState(theta, omega), ControlInput(u), discretize(Ts), WIDE)
        expected_theta = theta + omega * Ts + 0.5 * u * Ts * Ts
        expected_omega = omega + u * Ts
        assert x.angle == pytest.approx(expected_theta, rel=1e-12, abs=1e-15)
        assert x.velocity == pytest.approx(expected_omega, rel=1e-12, abs=1e-15)
        assert x.flags == 0


def test_unit_acceleration_from_rest():
    x = plant_step(JointState(0.0, 0.0), ControlInput(1.0), discretize(0.01), PlantConfig())
    assert x.angle == pytest.approx(5e-5, abs=1e-15)
    assert x.velocity == pytest.approx(0.01, abs=1e-15)


def test_input_is_clamped_before_integration():
    x = plant_step(JointState(0.0, 0.0), ControlInput(10.0), discretize(0.01), PlantConfig())
    assert x.velocity == pytest.approx(0.04)
    assert x.flags & INPUT_CLAMPED


def test_velocity_and_angle_clamps_set_flags():
    m = discretize(0.01)
    x = plant_step(JointState(0.0, 3.14), ControlInput(4.0), m, PlantConfig())
    assert x.velocity == 3.14
    assert x.flags & VELOCITY_CLAMPED
    assert not x.flags & INPUT_CLAMPED

    y = plant_step(JointState(5.999, 3.0), ControlInput(0.0), m, PlantConfig())
    assert y.angle == 6.0
    assert y.flags & ANGLE_CLAMPED


def test_joint_batch_matches_single_steps(model, plant_cfg):
    rng = np.random.default_rng(3)
    X = rng.uniform(-1, 1, size=(6, 2))
    U = rng.uniform(-5, 5, size=6)
    X_next, flags = plant_step_joints(X, U, model, plant_cfg)
    for j in range(6):
        x = plant_step(JointState(X[j, 0], X[j, 1]), ControlInput(U[j]), model, plant_cfg)
        assert X_next[j, 0] == x.angle
        assert X_next[j, 1] == x.velocity
        assert flags[j] == x.flags


def test_joint_batch_rejects_shape_mismatch(model, plant_cfg):
    with pytest.raises(InvalidArgumentError):
        plant_step_joints(np.zeros((3, 2)), np.zeros(2), model, plant_cfg)


def test_open_loop_trajectory(model, plant_cfg):
    traj = simulate_open_loop(JointState(0.0, 0.0), [ControlInput(1.0)] * 10, model, plant_cfg)
    assert len(traj) == 11
    assert traj[0] == JointState(0.0, 0.0)
    # Constant acceleration: theta(t) = t^2 / 2
    assert traj[-1].angle == pytest.approx(0.5 * 0.1 ** 2, rel=1e-12)
    assert traj[-1].velocity == pytest.approx(0.1, rel=1e-12)


def test_open_loop_rejects_empty_sequence(model, plant_cfg):
    with pytest.raises(InvalidArgumentError):
        simulate_open_loop(JointState(), [], model, plant_cfg)


def test_plant_config_validation():
    with pytest.raises(InvalidArgumentError):
        PlantConfig(joint_count=0)
    with pytest.raises(InvalidArgumentError):
        PlantConfig(input_limits=(1.0, -1.0))
    assert math.isclose(PlantConfig().Ts, 0.01)


def test_clamped_input_gives_same_step():
    m = discretize(0.01)
    cfg = PlantConfig(joint_count=50)
    rng = np.random.default_rng(8)
    X = np.column_stack([rng.uniform(-6.0, 6.0, 50), rng.uniform(-3.14, 3.14, 50)])
    U = rng.uniform(-20.0, 20.0, 50)
    X1, f1 = plant_step_joints(X, U, m, cfg)
    X2, f2 = plant_step_joints(X, np.clip(U, *cfg.input_limits), m, cfg)
    np.testing.assert_array_equal(X1, X2)
    assert np.all(f2 & INPUT_CLAMPED == 0)
    assert np.all((f1 & INPUT_CLAMPED != 0) == (np.abs(U) > 4.0))
    # Limits hold after the step
    assert np.all(np.abs(X1[:, 0]) <= 6.0) and np.all(np.abs(X1[:, 1]) <= 3.14)


def test_unsaturated_step_is_linear():
    m = discretize(0.01)
    rng = np.random.default_rng(13)
    for _ in range(50):
        x, y = rng.uniform(-1.0, 1.0, size=(2, 1, 2))
        u, v = rng.uniform(-1.0, 1.0, size=(2, 1))
        a, b = rng.uniform(-2.0, 2.0, size=2)
        combined, _ = plant_step_joints(a * x + b * y, a * u + b * v, m, WIDE)
        xs, _ = plant_step_joints(x, u, m, WIDE)
        ys, _ = plant_step_joints(y, v, m, WIDE)
        np.testing.assert_allclose(combined, a * xs + b * ys, rtol=0, atol=1e-12)
