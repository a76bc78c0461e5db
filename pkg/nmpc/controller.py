"""
Joint controllers: condensed box-constrained MPC, PID baseline and
model-based forward prediction

MPC cost per joint (N inputs u(0..N-1) drive states x(1..N)):

    J = sum_i (x(i) - r(i))^T Qx (x(i) - r(i)) + Qu u(i-1)^2

States are eliminated with X = Phi x0 + Gamma u, giving
J(u) = u^T H u + 2 g^T u + c with H = Gamma^T Qbar Gamma + Qu I. Input
bounds stay hard (box); state bounds enter as a quadratic penalty on the
amount by which a predicted state leaves its interval.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from nmpc.dynamics import (
    DEFAULT_ANGLE_LIMITS,
    DEFAULT_INPUT_LIMITS,
    DEFAULT_VELOCITY_LIMITS,
    ControlInput,
    DiscreteModel,
    InvalidArgumentError,
    JointState,
    PlantConfig,
    plant_step_joints,
)

logger = logging.getLogger(__name__)

# Backtracking halvings allowed per projected-gradient step
MAX_BACKTRACKS = 40


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 30
    Qx: Tuple[float, float] = (13.0, 1.8)
    Qu: float = 0.01
    angle_limits: Tuple[float, float] = DEFAULT_ANGLE_LIMITS
    velocity_limits: Tuple[float, float] = DEFAULT_VELOCITY_LIMITS
    input_limits: Tuple[float, float] = DEFAULT_INPUT_LIMITS
    solver_tolerance: float = 1e-8
    max_iterations: int = 2000
    state_penalty_weight: float = 1e4

    def __post_init__(self):
        if int(self.horizon) < 1:
            raise InvalidArgumentError(f"horizon must be >= 1, got {self.horizon}")
        if len(self.Qx) != 2 or min(self.Qx) <= 0:
            raise InvalidArgumentError(f"Qx must be two positive weights, got {self.Qx}")
        if self.Qu <= 0:
            raise InvalidArgumentError(f"Qu must be positive, got {self.Qu}")
        if self.solver_tolerance <= 0:
            raise InvalidArgumentError("solver_tolerance must be positive")
        if int(self.max_iterations) < 1:
            raise InvalidArgumentError("max_iterations must be >= 1")
        if self.state_penalty_weight < 0:
            raise InvalidArgumentError("state_penalty_weight must be >= 0")


@dataclass(frozen=True)
class ReferenceTarget:
    angle: float = 0.0
    velocity: float = 0.0


@dataclass
class MpcSolution:
    u_seq: List[ControlInput]
    predicted_states: List[JointState]
    cost: float
    iterations_used: int
    converged: bool

    def accelerations(self) -> np.ndarray:
        return np.array([u.acceleration for u in self.u_seq])


@dataclass(frozen=True)
class PidConfig:
    kp: float = 6.25
    ki: float = 0.2
    kd: float = 5.0
    input_limits: Tuple[float, float] = DEFAULT_INPUT_LIMITS
    integral_limit: float = 1.0
    # "measured": de/dt = ref velocity - measured velocity
    # "difference": de/dt = (e - e_prev) / Ts
    derivative_mode: str = "measured"

    def __post_init__(self):
        if self.derivative_mode not in ("measured", "difference"):
            raise InvalidArgumentError(f"unknown derivative_mode {self.derivative_mode!r}")
        if self.integral_limit <= 0:
            raise InvalidArgumentError("integral_limit must be positive")


@dataclass(frozen=True)
class PidState:
    integral: float = 0.0
    prev_error: Optional[float] = None


@dataclass
class CondensedQP:
    """Per-joint QP data; objective u^T H u + 2 g^T u + c + penalty"""
    H: np.ndarray
    g: np.ndarray
    c: float
    lower: np.ndarray
    upper: np.ndarray
    Gamma: np.ndarray
    free: np.ndarray
    reference: np.ndarray
    state_lower: np.ndarray
    state_upper: np.ndarray
    penalty_weight: float
    Qx: Tuple[float, float]
    Qu: float


@lru_cache(maxsize=64)
def _prediction_matrices_cached(ad: bytes, bd: bytes, N: int):
    Ad = np.frombuffer(ad).reshape(2, 2)
    Bd = np.frombuffer(bd).reshape(2, 1)
    powers = [np.eye(2)]
    for _ in range(N):
        powers.append(Ad @ powers[-1])
    Phi = np.vstack([powers[i] for i in range(1, N + 1)])
    Gamma = np.zeros((2 * N, N))
    for i in range(1, N + 1):
        for k in range(i):
            Gamma[2 * (i - 1):2 * i, k] = (powers[i - 1 - k] @ Bd)[:, 0]
    Phi.setflags(write=False)
    Gamma.setflags(write=False)
    return Phi, Gamma


def prediction_matrices(m: DiscreteModel, N: int) -> Tuple[np.ndarray, np.ndarray]:
    """Stacked (Phi, Gamma), rows ordered [angle_1, velocity_1, angle_2, ...]"""
    return _prediction_matrices_cached(
        np.ascontiguousarray(m.Ad, dtype=float).tobytes(),
        np.ascontiguousarray(m.Bd, dtype=float).tobytes(),
        int(N),
    )


def reference_trajectory(ref, N: int) -> np.ndarray:
    """Normalize a target or a sequence of N targets into an (N, 2) array"""
    if isinstance(ref, ReferenceTarget):
        return np.tile([ref.angle, ref.velocity], (N, 1)).astype(float)
    if isinstance(ref, np.ndarray) and ref.ndim == 2:
        if ref.shape != (N, 2):
            raise InvalidArgumentError(f"reference trajectory must be ({N}, 2), got {ref.shape}")
        return ref.astype(float)
    ref = list(ref)
    if len(ref) != N:
        raise InvalidArgumentError(f"expected {N} reference targets, got {len(ref)}")
    return np.array([[r.angle, r.velocity] for r in ref], dtype=float)


def _state_bounds(cfg: MpcConfig, N: int) -> Tuple[np.ndarray, np.ndarray]:
    lo = np.tile([cfg.angle_limits[0], cfg.velocity_limits[0]], N).astype(float)
    hi = np.tile([cfg.angle_limits[1], cfg.velocity_limits[1]], N).astype(float)
    return lo, hi


def build_qp(x0: JointState, ref, m: DiscreteModel, cfg: MpcConfig) -> CondensedQP:
    """
    Condense the MPC problem of one joint

    Args:
        x0: current state
        ref: ReferenceTarget (held over the horizon) or N targets for x(1..N)
        m: discrete model
        cfg: MPC configuration

    Returns:
        CondensedQP with H symmetric positive definite (min eigenvalue >= Qu)
    """
    N = int(cfg.horizon)
    Phi, Gamma = prediction_matrices(m, N)
    R = reference_trajectory(ref, N).reshape(-1)
    qbar = np.tile(np.asarray(cfg.Qx, dtype=float), N)

    free = Phi @ np.array([x0.angle, x0.velocity], dtype=float)
    e0 = free - R
    H = Gamma.T @ (qbar[:, None] * Gamma) + cfg.Qu * np.eye(N)
    H = 0.5 * (H + H.T)
    g = Gamma.T @ (qbar * e0)
    c = float(e0 @ (qbar * e0))
    state_lo, state_hi = _state_bounds(cfg, N)
    lo, hi = cfg.input_limits
    return CondensedQP(
        H=H, g=g, c=c,
        lower=np.full(N, float(lo)), upper=np.full(N, float(hi)),
        Gamma=Gamma, free=free, reference=R,
        state_lower=state_lo, state_upper=state_hi,
        penalty_weight=float(cfg.state_penalty_weight),
        Qx=tuple(cfg.Qx), Qu=float(cfg.Qu),
    )


def _objective(U, H, G, C, Gamma, Free, slo, shi, w):
    X = Free + U @ Gamma.T
    V = X - np.clip(X, slo, shi)
    return np.sum(U * (U @ H), axis=1) + 2.0 * np.sum(G * U, axis=1) + C + w * np.sum(V * V, axis=1)


def _projected_gradient(U, grad, lo, hi):
    pg = grad.copy()
    pg[(U <= lo) & (grad > 0)] = 0.0
    pg[(U >= hi) & (grad < 0)] = 0.0
    return pg


def _solve_batch(H, G, C, Gamma, Free, slo, shi, w, lo, hi, U0, tol, max_iter):
    """
    Projected gradient with exact line search for a batch of joints
    sharing H and Gamma; rows of G, C, Free and U0 belong to one joint each.

    Returns:
        (U, iterations, converged) per row
    """
    J = G.shape[0]
    U = np.clip(U0, lo, hi)
    # Start from the better of the warm start and the zero sequence
    zero = np.zeros_like(U)
    f = _objective(U, H, G, C, Gamma, Free, slo, shi, w)
    f_zero = _objective(zero, H, G, C, Gamma, Free, slo, shi, w)
    worse = f_zero < f
    U[worse] = 0.0
    f[worse] = f_zero[worse]

    iterations = np.zeros(J, dtype=np.int64)
    converged = np.zeros(J, dtype=bool)
    active = np.ones(J, dtype=bool)

    for _ in range(int(max_iter) + 1):
        X = Free + U @ Gamma.T
        V = X - np.clip(X, slo, shi)
        grad = 2.0 * (U @ H) + 2.0 * G + 2.0 * w * (V @ Gamma)
        pg = _projected_gradient(U, grad, lo, hi)
        norm = np.sqrt(np.sum(pg * pg, axis=1))
        newly = active & (norm <= tol)
        converged |= newly
        active &= ~newly
        if not active.any() or (iterations >= max_iter)[active].all():
            break

        d = -pg
        Gd = d @ Gamma.T
        violated = V != 0.0
        curvature = 2.0 * np.sum(d * (d @ H), axis=1) + 2.0 * w * np.sum((Gd * violated) ** 2, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            alpha = np.where(curvature > 0, np.sum(pg * pg, axis=1) / curvature, 0.0)

        step_rows = active & (iterations < max_iter)
        accepted = np.zeros(J, dtype=bool)
        U_new = U.copy()
        f_new = f.copy()
        pending = step_rows.copy()
        for _ in range(MAX_BACKTRACKS):
            if not pending.any():
                break
            trial = np.clip(U + alpha[:, None] * d, lo, hi)
            f_trial = _objective(trial, H, G, C, Gamma, Free, slo, shi, w)
            ok = pending & (f_trial <= f[:] + 1e-15 * np.abs(f))
            U_new[ok] = trial[ok]
            f_new[ok] = f_trial[ok]
            accepted |= ok
            pending &= ~ok
            alpha = np.where(pending, 0.5 * alpha, alpha)

        # No descent possible: the iterate is as good as floating point allows
        stalled = pending
        active &= ~stalled
        U, f = U_new, f_new
        iterations[accepted] += 1

    return U, iterations, converged


def _states_from_qp(qp: CondensedQP, u: np.ndarray) -> np.ndarray:
    return (qp.free + qp.Gamma @ u).reshape(-1, 2)


def solution_cost(states: np.ndarray, u: np.ndarray, reference: np.ndarray,
                  Qx: Sequence[float], Qu: float) -> float:
    """Direct evaluation of the MPC cost from predicted states and inputs"""
    err = np.asarray(states, dtype=float).reshape(-1, 2) - np.asarray(reference, dtype=float).reshape(-1, 2)
    u = np.asarray(u, dtype=float)
    return float(np.sum(err * err * np.asarray(Qx, dtype=float)) + Qu * np.sum(u * u))


def qp_cost(qp: CondensedQP, u: np.ndarray) -> float:
    """Quadratic part of the condensed objective, u^T H u + 2 g^T u + c"""
    u = np.asarray(u, dtype=float)
    return float(u @ qp.H @ u + 2.0 * qp.g @ u + qp.c)


def _make_solution(qp: CondensedQP, u: np.ndarray, iterations: int, converged: bool) -> MpcSolution:
    states = _states_from_qp(qp, u)
    return MpcSolution(
        u_seq=[ControlInput(float(a)) for a in u],
        predicted_states=[JointState(float(s[0]), float(s[1])) for s in states],
        cost=solution_cost(states, u, qp.reference, qp.Qx, qp.Qu),
        iterations_used=int(iterations),
        converged=bool(converged),
    )


def solve_qp(qp: CondensedQP, cfg: MpcConfig,
             warm_start: Optional[np.ndarray] = None) -> MpcSolution:
    """
    Minimize the condensed objective over the input box

    Never raises on non-convergence: the best iterate is returned with
    converged=False.
    """
    N = qp.H.shape[0]
    U0 = np.zeros((1, N)) if warm_start is None else np.asarray(warm_start, dtype=float).reshape(1, N)
    U, iterations, converged = _solve_batch(
        qp.H, qp.g[None, :], np.array([qp.c]), qp.Gamma, qp.free[None, :],
        qp.state_lower, qp.state_upper, qp.penalty_weight,
        qp.lower[0], qp.upper[0], U0, cfg.solver_tolerance, cfg.max_iterations,
    )
    if not converged[0]:
        logger.debug(f"MPC solve stopped after {iterations[0]} iterations without converging")
    return _make_solution(qp, U[0], iterations[0], converged[0])


def mpc_control(x0: Union[JointState, Sequence[JointState]], ref, m: DiscreteModel,
                cfg: MpcConfig) -> Union[MpcSolution, List[MpcSolution]]:
    """
    Build and solve the MPC problem

    A single JointState gives one MpcSolution; a sequence of states (with a
    matching sequence of references) gives one independent solution per joint.
    """
    if isinstance(x0, JointState):
        return solve_qp(build_qp(x0, ref, m, cfg), cfg)
    states = list(x0)
    refs = list(ref)
    if len(refs) != len(states):
        raise InvalidArgumentError(f"{len(refs)} references for {len(states)} joints")
    return [solve_qp(build_qp(x, r, m, cfg), cfg) for x, r in zip(states, refs)]


class MpcAgent:
    """
    Solves all joints of one controller in a single batch and keeps each
    joint's previous solution as a shifted warm start
    """

    def __init__(self, m: DiscreteModel, cfg: MpcConfig, joint_count: int):
        self.m = m
        self.cfg = cfg
        self.joint_count = joint_count
        self.Phi, self.Gamma = prediction_matrices(m, cfg.horizon)
        N = cfg.horizon
        self.qbar = np.tile(np.asarray(cfg.Qx, dtype=float), N)
        H = self.Gamma.T @ (self.qbar[:, None] * self.Gamma) + cfg.Qu * np.eye(N)
        self.H = 0.5 * (H + H.T)
        self.state_lower, self.state_upper = _state_bounds(cfg, N)
        self._warm = np.zeros((joint_count, N))
        self.solves = 0
        self.unconverged = 0
        self.total_iterations = 0

    def solve(self, X0: np.ndarray, ref_traj: np.ndarray,
              with_solutions: bool = True) -> Tuple[np.ndarray, List[MpcSolution]]:
        """
        Args:
            X0: (J, 2) current states
            ref_traj: (J, N, 2) reference for x(1..N) of each joint
            with_solutions: build per-joint MpcSolution objects; the loop skips this

        Returns:
            (plan, solutions) with plan an (N, J) array of accelerations
        """
        cfg = self.cfg
        N = cfg.horizon
        X0 = np.asarray(X0, dtype=float).reshape(-1, 2)
        R = np.asarray(ref_traj, dtype=float).reshape(X0.shape[0], 2 * N)
        Free = X0 @ self.Phi.T
        E0 = Free - R
        G = (E0 * self.qbar) @ self.Gamma
        C = np.sum(E0 * E0 * self.qbar, axis=1)
        warm = np.concatenate([self._warm[:, 1:], self._warm[:, -1:]], axis=1)
        U, iterations, converged = _solve_batch(
            self.H, G, C, self.Gamma, Free, self.state_lower, self.state_upper,
            cfg.state_penalty_weight, cfg.input_limits[0], cfg.input_limits[1],
            warm, cfg.solver_tolerance, cfg.max_iterations,
        )
        self._warm = U.copy()
        self.solves += U.shape[0]
        self.unconverged += int(np.count_nonzero(~converged))
        self.total_iterations += int(np.sum(iterations))

        solutions = []
        if not with_solutions:
            return U.T.copy(), solutions
        for j in range(U.shape[0]):
            states = (Free[j] + self.Gamma @ U[j]).reshape(-1, 2)
            solutions.append(MpcSolution(
                u_seq=[ControlInput(float(a)) for a in U[j]],
                predicted_states=[JointState(float(s[0]), float(s[1])) for s in states],
                cost=solution_cost(states, U[j], R[j], cfg.Qx, cfg.Qu),
                iterations_used=int(iterations[j]),
                converged=bool(converged[j]),
            ))
        return U.T.copy(), solutions


def pid_control(x: JointState, ref: ReferenceTarget, s: PidState, Ts: float,
                cfg: PidConfig) -> Tuple[ControlInput, PidState]:
    """
    One PID update on the angle error with conditional-integration anti-windup

    The integral is frozen whenever the output saturates.
    """
    if not Ts > 0:
        raise InvalidArgumentError(f"Ts must be positive, got {Ts}")
    error = ref.angle - x.angle
    if cfg.derivative_mode == "measured":
        derivative = ref.velocity - x.velocity
    elif s.prev_error is None:
        derivative = 0.0
    else:
        derivative = (error - s.prev_error) / Ts

    integral = float(np.clip(s.integral + error * Ts, -cfg.integral_limit, cfg.integral_limit))
    raw = cfg.kp * error + cfg.ki * integral + cfg.kd * derivative
    lo, hi = cfg.input_limits
    u = min(max(raw, lo), hi)
    if u != raw:
        integral = s.integral
    return ControlInput(float(u)), PidState(integral=integral, prev_error=error)


def predict_forward_joints(X_meas: np.ndarray, applied: np.ndarray, k: int,
                           m: DiscreteModel, cfg: PlantConfig) -> np.ndarray:
    """
    Roll (J, 2) states forward k steps with a (rows, J) control log,
    zero-padded when the log is short
    """
    if k < 0:
        raise InvalidArgumentError(f"k must be >= 0, got {k}")
    X = np.asarray(X_meas, dtype=float).reshape(-1, 2)
    applied = np.asarray(applied, dtype=float).reshape(-1, X.shape[0]) if np.size(applied) else np.zeros((0, X.shape[0]))
    for i in range(k):
        U = applied[i] if i < applied.shape[0] else np.zeros(X.shape[0])
        X, _ = plant_step_joints(X, U, m, cfg)
    return X


def predict_forward(x_meas: JointState, applied_u: Sequence[ControlInput], k: int,
                    m: DiscreteModel, cfg: Optional[PlantConfig] = None) -> JointState:
    """
    Estimate the current state from a measurement k steps old

    Args:
        x_meas: measured state
        applied_u: controls applied since the measurement was taken, oldest first
        k: age of the measurement in sample periods
        m: discrete model
        cfg: plant limits used for saturation (defaults for m.Ts)
    """
    cfg = cfg or PlantConfig(Ts=m.Ts)
    if k < 0:
        raise InvalidArgumentError(f"k must be >= 0, got {k}")
    if k == 0:
        return x_meas
    log = np.array([[u.acceleration] for u in applied_u], dtype=float)
    X = predict_forward_joints(np.array([[x_meas.angle, x_meas.velocity]]), log, k, m, cfg)
    return JointState(float(X[0, 0]), float(X[0, 1]))
