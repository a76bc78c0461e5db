"""
Joint plant model: double integrator per joint

x = [angle, velocity], u = acceleration. The continuous model is
xdot = A x + B u with A = [[0, 1], [0, 0]], B = [0, 1]^T and full-state
output. Because A is nilpotent the zero-order-hold discretization is exact
and closed-form.
"""

import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

# Clamping flags carried on JointState.flags
INPUT_CLAMPED = 1
VELOCITY_CLAMPED = 2
ANGLE_CLAMPED = 4

DEFAULT_ANGLE_LIMITS = (-6.0, 6.0)
DEFAULT_VELOCITY_LIMITS = (-3.14, 3.14)
DEFAULT_INPUT_LIMITS = (-4.0, 4.0)


class InvalidArgumentError(ValueError):
    pass


@dataclass(frozen=True)
class JointState:
    """Angle (rad) and angular velocity (rad/s) of one joint"""
    angle: float = 0.0
    velocity: float = 0.0
    flags: int = field(default=0, compare=False)

    def as_array(self) -> np.ndarray:
        return np.array([self.angle, self.velocity], dtype=float)


@dataclass(frozen=True)
class ControlInput:
    acceleration: float = 0.0


@dataclass(frozen=True)
class DiscreteModel:
    Ad: np.ndarray
    Bd: np.ndarray
    Ts: float


@dataclass(frozen=True)
class PlantConfig:
    joint_count: int = 6
    Ts: float = 0.01
    angle_limits: Tuple[float, float] = DEFAULT_ANGLE_LIMITS
    velocity_limits: Tuple[float, float] = DEFAULT_VELOCITY_LIMITS
    input_limits: Tuple[float, float] = DEFAULT_INPUT_LIMITS

    def __post_init__(self):
        if int(self.joint_count) < 1:
            raise InvalidArgumentError(f"joint_count must be >= 1, got {self.joint_count}")
        _check_period(self.Ts)
        for name in ("angle_limits", "velocity_limits", "input_limits"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise InvalidArgumentError(f"{name} must be an interval, got {(lo, hi)}")


def _check_period(Ts) -> float:
    try:
        Ts = float(Ts)
    except (TypeError, ValueError):
        raise InvalidArgumentError(f"sample period must be a number, got {Ts!r}")
    if not math.isfinite(Ts) or Ts <= 0.0:
        raise InvalidArgumentError(f"sample period must be positive and finite, got {Ts}")
    return Ts


def continuous_model() -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (A, B, C) of the continuous double integrator"""
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    B = np.array([[0.0], [1.0]])
    C = np.eye(2)
    return A, B, C


def discretize(Ts: float) -> DiscreteModel:
    """
    Exact zero-order-hold discretization

    Args:
        Ts: sample period in seconds

    Returns:
        DiscreteModel with Ad = [[1, Ts], [0, 1]], Bd = [[Ts^2/2], [Ts]]
    """
    Ts = _check_period(Ts)
    Ad = np.array([[1.0, Ts], [0.0, 1.0]])
    Bd = np.array([[0.5 * Ts * Ts], [Ts]])
    return DiscreteModel(Ad=Ad, Bd=Bd, Ts=Ts)


def clamp(value, limits):
    lo, hi = limits
    return np.minimum(np.maximum(value, lo), hi)


def plant_step_joints(X: np.ndarray, U: np.ndarray, m: DiscreteModel,
                      cfg: PlantConfig) -> Tuple[np.ndarray, np.ndarray]:
    """
    Step all joints at once

    Clamp input, integrate, then clamp velocity and angle. Arithmetic is
    elementwise so each row is bit-identical to a single-joint step.

    Args:
        X: (J, 2) array of [angle, velocity]
        U: (J,) requested accelerations

    Returns:
        (X_next, flags) with flags an int array of *_CLAMPED bits per joint
    """
    X = np.asarray(X, dtype=float).reshape(-1, 2)
    U = np.asarray(U, dtype=float).reshape(-1)
    if U.shape[0] != X.shape[0]:
        raise InvalidArgumentError(f"{U.shape[0]} inputs for {X.shape[0]} joints")
    Ad, Bd = m.Ad, m.Bd
    if Ad.shape != (2, 2) or Bd.shape != (2, 1):
        raise InvalidArgumentError("invalid discrete model")

    flags = np.zeros(X.shape[0], dtype=np.int64)
    Uc = clamp(U, cfg.input_limits)
    flags[Uc != U] |= INPUT_CLAMPED

    theta, omega = X[:, 0], X[:, 1]
    theta_next = Ad[0, 0] * theta + Ad[0, 1] * omega + Bd[0, 0] * Uc
    omega_next = Ad[1, 0] * theta + Ad[1, 1] * omega + Bd[1, 0] * Uc

    omega_c = clamp(omega_next, cfg.velocity_limits)
    flags[omega_c != omega_next] |= VELOCITY_CLAMPED
    theta_c = clamp(theta_next, cfg.angle_limits)
    flags[theta_c != theta_next] |= ANGLE_CLAMPED

    return np.column_stack([theta_c, omega_c]), flags


def plant_step(x: JointState, u: ControlInput, m: DiscreteModel,
               cfg: PlantConfig) -> JointState:
    """Single-joint step; clamping events land in the result's flags"""
    X, flags = plant_step_joints(
        np.array([[x.angle, x.velocity]]), np.array([u.acceleration]), m, cfg
    )
    return JointState(float(X[0, 0]), float(X[0, 1]), flags=int(flags[0]))


def simulate_open_loop(x0: JointState, u_seq: Sequence[ControlInput],
                       m: DiscreteModel, cfg: PlantConfig) -> List[JointState]:
    """Trajectory [x0, x1, ..., xN] under u_seq"""
    if len(u_seq) == 0:
        raise InvalidArgumentError("u_seq must not be empty")
    trajectory = [x0]
    for u in u_seq:
        trajectory.append(plant_step(trajectory[-1], u, m, cfg))
    return trajectory
