"""
Plant-side and controller-side agents

Both the simulation engine and the UDP endpoints drive these same objects;
only the clock and the packet transport differ. All times are integer
nanoseconds.
"""

import bisect
import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from nmpc.controller import MpcAgent, PidState, ReferenceTarget, pid_control, predict_forward_joints
from nmpc.dynamics import ControlInput, JointState, discretize, plant_step_joints
from nmpc.netsim import ControlPayload, LatestBuffer, Packet, StatePayload, derive_seed, to_ns
from nmpc.scenario import ScenarioConfig, reference_signal

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Selection:
    """Outcome of one actuator-side control selection"""
    controls: np.ndarray
    packet_seq: int = -1
    origin_timestamp: int = 0
    index: int = -1
    hit: bool = False


def select_index(now_ns: int, origin_ns: int, Ts_ns: int, horizon: int) -> int:
    """floor(elapsed / Ts) clamped to [0, horizon - 1]"""
    index = (now_ns - origin_ns) // Ts_ns
    return int(min(max(index, 0), horizon - 1))


def control_selection(buf: LatestBuffer, now: float, Ts: float,
                      last_applied: Optional[List[ControlInput]] = None,
                      joint_count: int = 6) -> List[ControlInput]:
    """
    Pick the control for the current instant from the actuator buffer

    An empty buffer holds the last applied control (zero before the first
    packet); otherwise the horizon is indexed by the time elapsed since the
    packet's origin timestamp.
    """
    p = buf.latest()
    if p is None:
        if last_applied is not None:
            return list(last_applied)
        return [ControlInput(0.0) for _ in range(joint_count)]
    payload = p.payload
    index = select_index(to_ns(now), p.origin_timestamp, to_ns(Ts), payload.horizon)
    return [ControlInput(float(a)) for a in payload.accelerations[index]]


def reference_block(cfg: ScenarioConfig, times: List[float]) -> np.ndarray:
    """(J, len(times), 2) array of reference angle/velocity per joint"""
    out = np.zeros((cfg.joint_count, len(times), 2))
    cache = {}
    for j in range(cfg.joint_count):
        spec = cfg.joint_reference(j)
        if spec is None:
            continue
        if spec not in cache:
            block = np.empty((len(times), 2))
            for i, t in enumerate(times):
                r = reference_signal(spec, t)
                block[i, 0] = r.angle
                block[i, 1] = r.velocity
            cache[spec] = block
        out[j] = cache[spec]
    return out


class PlantAgent:
    """
    The robot side: plant state, actuator buffer and state sampling
    """

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.plant_cfg = cfg.plant_config()
        self.m = discretize(cfg.Ts)
        self.Ts_ns = to_ns(cfg.Ts)
        J = cfg.joint_count
        self.X = np.zeros((J, 2))
        if cfg.initial_angles is not None:
            self.X[:, 0] = np.asarray(cfg.initial_angles, dtype=float)
        self.flags = np.zeros(J, dtype=np.int64)
        self.buffer = LatestBuffer()
        self.last_applied = np.zeros(J)
        self.seq = 0
        self.last_rtt_ns: Optional[int] = None
        self._rng = np.random.default_rng(derive_seed(cfg.seed, "plant"))

    def receive(self, p: Packet, now_ns: int) -> bool:
        """Offer a CONTROL to the actuator buffer; records an RTT sample on acceptance"""
        if not isinstance(p.payload, ControlPayload) or p.payload.joint_count != self.cfg.joint_count:
            logger.debug(f"plant ignored packet seq={p.seq}: not a matching CONTROL")
            return False
        accepted = self.buffer.offer(p)
        if accepted and p.echo_timestamp > 0:
            self.last_rtt_ns = now_ns - p.echo_timestamp
        return accepted

    def select(self, now_ns: int) -> Selection:
        p = self.buffer.latest()
        if p is None:
            return Selection(controls=self.last_applied.copy())
        index = select_index(now_ns, p.origin_timestamp, self.Ts_ns, p.payload.horizon)
        controls = np.asarray(p.payload.accelerations[index], dtype=float)
        return Selection(controls=controls, packet_seq=p.seq,
                         origin_timestamp=p.origin_timestamp, index=index, hit=True)

    def sample(self, now_ns: int) -> Packet:
        latest = self.buffer.latest()
        echo = latest.origin_timestamp if latest is not None else 0
        p = Packet(
            seq=self.seq,
            origin_timestamp=now_ns,
            echo_timestamp=echo,
            payload=StatePayload(tuple((float(a), float(v)) for a, v in self.X)),
        )
        self.seq += 1
        return p

    def step(self, controls: np.ndarray) -> None:
        U = np.asarray(controls, dtype=float)
        self.last_applied = np.clip(U, *self.plant_cfg.input_limits)
        if self.cfg.disturbance_std > 0:
            U = U + self._rng.normal(0.0, self.cfg.disturbance_std, size=U.shape)
        self.X, self.flags = plant_step_joints(self.X, U, self.m, self.plant_cfg)


class ControllerAgent:
    """
    The server side: state buffer, forward prediction, MPC or PID, and the
    log of plans sent (used to reconstruct the controls the plant applied)
    """

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.plant_cfg = cfg.plant_config()
        self.m = discretize(cfg.Ts)
        self.Ts_ns = to_ns(cfg.Ts)
        self.buffer = LatestBuffer()
        self.mpc = MpcAgent(self.m, cfg.mpc, cfg.joint_count) if cfg.controller_kind == "mpc" else None
        self.pid_states = [PidState() for _ in range(cfg.joint_count)]
        self.seq = 0
        self._last_state_seq: Optional[int] = None
        # Ticks from a plan's stamp to the first tick it is applied. Measured on
        # the first state echoing a newer plan; one tick until any echo arrives.
        self._lead_ticks = 1
        self._last_echo = 0
        self._plan_times: List[int] = []
        self._plans: List[np.ndarray] = []
        self._plan_log_limit = 8 * cfg.mpc.horizon + 256
        self.plans_computed = 0
        # Clock value at scenario time 0; reference signals are evaluated at now - epoch_ns
        self.epoch_ns = 0

    @property
    def horizon(self) -> int:
        return self.cfg.mpc.horizon if self.mpc is not None else 1

    def receive(self, p: Packet) -> bool:
        if not isinstance(p.payload, StatePayload) or p.payload.joint_count != self.cfg.joint_count:
            logger.debug(f"controller ignored packet seq={p.seq}: not a matching STATE")
            return False
        accepted = self.buffer.offer(p)
        if accepted and p.echo_timestamp > self._last_echo:
            self._last_echo = p.echo_timestamp
            self._lead_ticks = max(1, (p.origin_timestamp - p.echo_timestamp) // self.Ts_ns)
        return accepted

    @property
    def lead_ticks(self) -> int:
        return self._lead_ticks

    def compute_plan(self, X: np.ndarray, now_ns: int) -> np.ndarray:
        """(rows, J) accelerations starting at now_ns"""
        cfg = self.cfg
        if self.mpc is not None:
            t_ns = now_ns - self.epoch_ns
            times = [(t_ns + i * self.Ts_ns) / 1e9 for i in range(1, cfg.mpc.horizon + 1)]
            plan, _ = self.mpc.solve(X, reference_block(cfg, times), with_solutions=False)
        else:
            refs = reference_block(cfg, [(now_ns - self.epoch_ns) / 1e9])[:, 0, :]
            plan = np.zeros((1, cfg.joint_count))
            for j in range(cfg.joint_count):
                u, self.pid_states[j] = pid_control(
                    JointState(float(X[j, 0]), float(X[j, 1])),
                    ReferenceTarget(float(refs[j, 0]), float(refs[j, 1])),
                    self.pid_states[j], cfg.Ts, cfg.pid,
                )
                plan[0, j] = u.acceleration
        if not cfg.send_full_horizon:
            plan = plan[:1]
        self.plans_computed += 1
        return plan

    def applied_log(self, state_ts: int, steps: int) -> np.ndarray:
        """
        Controls the plant is believed to apply at ticks
        state_ts, state_ts + Ts, ..., for steps ticks

        A plan stamped s is taken to be in use from s + lead ticks on, with the
        lead measured from the echoes and assumed constant until the next one.
        """
        log = np.zeros((steps, self.cfg.joint_count))
        lag_ns = self._lead_ticks * self.Ts_ns
        for i in range(steps):
            t = state_ts + i * self.Ts_ns
            pos = bisect.bisect_right(self._plan_times, t - lag_ns) - 1
            if pos < 0:
                continue
            plan = self._plans[pos]
            index = select_index(t, self._plan_times[pos], self.Ts_ns, plan.shape[0])
            log[i] = plan[index]
        return log

    def on_tick(self, now_ns: int) -> Optional[Packet]:
        """
        Compute and return a CONTROL packet, or None when there is nothing new

        With forward prediction the state is rolled over its age plus the
        lead, the optimized rows start at the tick the plan is expected to
        arrive, and the rows before that repeat the controls the plant is
        already committed to. The plant's index then lands on the first
        optimized row whatever the forward delay.
        """
        latest = self.buffer.latest()
        if latest is None:
            return None
        if self.cfg.request_driven and latest.seq == self._last_state_seq:
            return None
        self._last_state_seq = latest.seq

        X = np.asarray(latest.payload.states, dtype=float)
        age = max(0, (now_ns - latest.origin_timestamp) // self.Ts_ns)
        # Plans are stamped on the plant's sample grid
        stamp = latest.origin_timestamp + age * self.Ts_ns
        predicted = self.cfg.forward_prediction_enabled
        if predicted:
            lead = self._lead_ticks
            log = self.applied_log(latest.origin_timestamp, age + lead)
            X = predict_forward_joints(X, log, age + lead, self.m, self.plant_cfg)
            plan = self.compute_plan(X, stamp + lead * self.Ts_ns)
            if self.cfg.send_full_horizon:
                plan = np.vstack([log[age:], plan])
        else:
            plan = self.compute_plan(X, stamp)

        self._remember(stamp, plan)
        p = Packet(
            seq=self.seq,
            origin_timestamp=stamp,
            echo_timestamp=latest.origin_timestamp,
            payload=ControlPayload(tuple(tuple(float(a) for a in row) for row in plan)),
            prediction_applied=predicted,
        )
        self.seq += 1
        return p

    def _remember(self, now_ns: int, plan: np.ndarray) -> None:
        self._plan_times.append(now_ns)
        self._plans.append(plan)
        if len(self._plans) > self._plan_log_limit:
            drop = len(self._plans) - self._plan_log_limit
            del self._plan_times[:drop]
            del self._plans[:drop]

    def solver_stats(self) -> dict:
        if self.mpc is None:
            return {"plans": self.plans_computed}
        return {
            "plans": self.plans_computed,
            "solves": self.mpc.solves,
            "unconverged": self.mpc.unconverged,
            "iterations": self.mpc.total_iterations,
        }
