"""
Discrete-time closed-loop engine

Each tick k (time k * Ts, integer nanoseconds throughout) runs, in order:

    a. FWD deliveries due by now enter the actuator buffer
    b. the plant selects its control and the trace record is taken
    c. every state_period_ticks ticks the plant samples x_k, stamps it and
       sends STATE over BWD
    d. BWD deliveries due by now enter the controller buffer
    e. the controller (every controller_period_ticks) sends CONTROL over FWD
    f. the plant steps with the selected control

Packet arrivals are therefore processed before the control decision of the
tick they are due in. With both channels at zero delay a plan computed at
tick k is applied at tick k+1 with horizon index 1, which is exactly what
run_direct_loop reproduces without any channel.
"""

import csv
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np

from nmpc.agents import ControllerAgent, PlantAgent, Selection, control_selection, reference_block
from nmpc.controller import predict_forward_joints
from nmpc.netsim import NS_PER_S, Channel, ChannelConfig, to_ns
from nmpc.scenario import ScenarioConfig, scenario_hash

logger = logging.getLogger(__name__)

__all__ = [
    "TraceRecord",
    "RunResult",
    "control_selection",
    "ideal_scenario",
    "log_summary",
    "read_trace_csv",
    "run_direct_loop",
    "run_scenario",
    "trace_fieldnames",
    "trace_record",
    "write_trace_csv",
]


@dataclass(frozen=True)
class TraceRecord:
    tick: int
    time: float
    # Per joint (angle, velocity)
    states: tuple
    references: tuple
    controls: tuple
    flags: tuple
    control_seq: int = -1
    # Horizon index used for this tick, -1 when holding without a packet
    control_index: int = -1
    actuator_hit: bool = False
    controller_fresh: bool = False
    rtt: Optional[float] = None


@dataclass
class RunResult:
    records: List[TraceRecord]
    scenario: Optional[ScenarioConfig] = None
    channel_stats: Dict[str, dict] = field(default_factory=dict)
    solver_stats: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def joint_count(self) -> int:
        return len(self.records[0].states) if self.records else 0

    def times(self) -> np.ndarray:
        return np.array([r.time for r in self.records])

    def angles(self) -> np.ndarray:
        """(ticks, J) joint angles"""
        return np.array([[s[0] for s in r.states] for r in self.records])

    def velocities(self) -> np.ndarray:
        return np.array([[s[1] for s in r.states] for r in self.records])

    def reference_angles(self) -> np.ndarray:
        return np.array([[s[0] for s in r.references] for r in self.records])

    def controls(self) -> np.ndarray:
        return np.array([r.controls for r in self.records])

    def flags(self) -> np.ndarray:
        return np.array([r.flags for r in self.records], dtype=np.int64)

    def rtt_samples(self) -> np.ndarray:
        return np.array([r.rtt for r in self.records if r.rtt is not None])


def ideal_scenario(cfg: ScenarioConfig) -> ScenarioConfig:
    """The same scenario over unimpaired channels"""
    return replace(cfg, fwd_channel=ChannelConfig(), bwd_channel=ChannelConfig())


def trace_record(k: int, now_ns: int, plant: PlantAgent, cfg: ScenarioConfig, selection: Selection,
                 fresh: bool, rtt_ns: Optional[int]) -> TraceRecord:
    refs = reference_block(cfg, [now_ns / NS_PER_S])[:, 0, :]
    return TraceRecord(
        tick=k,
        time=now_ns / NS_PER_S,
        states=tuple((float(a), float(v)) for a, v in plant.X),
        references=tuple((float(a), float(v)) for a, v in refs),
        controls=tuple(float(u) for u in selection.controls),
        flags=tuple(int(f) for f in plant.flags),
        control_seq=selection.packet_seq,
        control_index=selection.index,
        actuator_hit=selection.hit,
        controller_fresh=fresh,
        rtt=None if rtt_ns is None else rtt_ns / NS_PER_S,
    )


def run_scenario(cfg: ScenarioConfig) -> RunResult:
    """
    Run one closed-loop scenario through simulated FWD/BWD channels

    Identical configs (seed included) give bit-identical traces.

    Returns:
        RunResult with floor(duration / Ts) + 1 trace records
    """
    started = time.time()
    Ts_ns = to_ns(cfg.Ts)
    plant = PlantAgent(cfg)
    controller = ControllerAgent(cfg)
    fwd_cfg, bwd_cfg = cfg.seeded_channels()
    fwd = Channel(fwd_cfg, "fwd")
    bwd = Channel(bwd_cfg, "bwd")
    logger.debug(f"scenario {scenario_hash(cfg)[:12]}: {cfg.tick_count} ticks, controller={cfg.controller_kind}")

    records: List[TraceRecord] = []
    fresh = False
    for k in range(cfg.tick_count):
        now_ns = k * Ts_ns
        now = now_ns / NS_PER_S

        rtt_ns = None
        for p in fwd.poll(now):
            if plant.receive(p, now_ns) and p.echo_timestamp > 0:
                rtt_ns = plant.last_rtt_ns

        selection = plant.select(now_ns)
        records.append(trace_record(k, now_ns, plant, cfg, selection, fresh, rtt_ns))

        if k % cfg.state_period_ticks == 0:
            bwd.send(plant.sample(now_ns), now)
        for p in bwd.poll(now):
            controller.receive(p)

        fresh = False
        if k % cfg.controller_period_ticks == 0:
            p = controller.on_tick(now_ns)
            if p is not None:
                fresh = True
                fwd.send(p, now)

        plant.step(selection.controls)

    return RunResult(
        records=records,
        scenario=cfg,
        channel_stats={"fwd": fwd.stats(), "bwd": bwd.stats()},
        solver_stats=controller.solver_stats(),
        wall_time=time.time() - started,
    )


def run_direct_loop(cfg: ScenarioConfig) -> RunResult:
    """
    Network-free loop with a fixed one-tick latency

    The controller sees the plant's latest sample directly and knows the
    controls applied since, so its prediction and plan prefix are exact. The
    plan computed at tick k is applied from tick k+1 on, indexed by the ticks
    elapsed since k. Matches run_scenario over zero-delay lossless channels.
    """
    started = time.time()
    Ts_ns = to_ns(cfg.Ts)
    plant = PlantAgent(cfg)
    controller = ControllerAgent(cfg)
    plan: Optional[np.ndarray] = None
    plan_tick = 0
    plans_sent = 0
    sampled = plant.X.copy()
    applied_since: List[np.ndarray] = []
    new_sample = False

    records: List[TraceRecord] = []
    fresh = False
    for k in range(cfg.tick_count):
        now_ns = k * Ts_ns
        if plan is None:
            selection_controls, index = plant.last_applied.copy(), -1
        else:
            index = min(k - plan_tick, plan.shape[0] - 1)
            selection_controls = plan[index]
        selection = Selection(
            controls=selection_controls,
            packet_seq=plans_sent - 1,
            origin_timestamp=plan_tick * Ts_ns,
            index=index,
            hit=plan is not None,
        )
        records.append(trace_record(k, now_ns, plant, cfg, selection, fresh, None))

        if k % cfg.state_period_ticks == 0:
            sampled = plant.X.copy()
            applied_since = []
            new_sample = True
        applied_since.append(np.asarray(selection.controls, dtype=float))

        fresh = k % cfg.controller_period_ticks == 0 and (new_sample or not cfg.request_driven)
        if fresh:
            new_sample = False
            if cfg.forward_prediction_enabled:
                steps = len(applied_since)
                X = predict_forward_joints(sampled, np.array(applied_since), steps,
                                           controller.m, controller.plant_cfg)
                plan = controller.compute_plan(X, now_ns + Ts_ns)
                if cfg.send_full_horizon:
                    plan = np.vstack([applied_since[-1][None, :], plan])
            else:
                plan = controller.compute_plan(sampled.copy(), now_ns)
            plan_tick = k
            plans_sent += 1
        plant.step(selection.controls)

    return RunResult(
        records=records,
        scenario=cfg,
        solver_stats=controller.solver_stats(),
        wall_time=time.time() - started,
    )


def trace_fieldnames(joint_count: int) -> List[str]:
    """
    Trace CSV header

    tick, time (s), rtt_ms (blank without a sample), control_seq,
    control_index, actuator_hit, controller_fresh, then per joint j:
    angle_j, velocity_j, ref_angle_j, ref_velocity_j, control_j, flags_j
    """
    names = ["tick", "time", "rtt_ms", "control_seq", "control_index",
             "actuator_hit", "controller_fresh"]
    for j in range(joint_count):
        names += [f"angle_{j}", f"velocity_{j}", f"ref_angle_{j}",
                  f"ref_velocity_{j}", f"control_{j}", f"flags_{j}"]
    return names


def write_trace_csv(result: RunResult, path: str) -> str:
    """Write the trace as CSV; floats use repr so a re-read is exact"""
    J = result.joint_count
    with open(path, "w", newline="") as csvfile:
        writer = csv.DictWriter(csvfile, fieldnames=trace_fieldnames(J))
        writer.writeheader()
        for r in result.records:
            row = {
                "tick": r.tick,
                "time": repr(r.time),
                "rtt_ms": "" if r.rtt is None else repr(r.rtt * 1000.0),
                "control_seq": r.control_seq,
                "control_index": r.control_index,
                "actuator_hit": int(r.actuator_hit),
                "controller_fresh": int(r.controller_fresh),
            }
            for j in range(J):
                row[f"angle_{j}"] = repr(r.states[j][0])
                row[f"velocity_{j}"] = repr(r.states[j][1])
                row[f"ref_angle_{j}"] = repr(r.references[j][0])
                row[f"ref_velocity_{j}"] = repr(r.references[j][1])
                row[f"control_{j}"] = repr(r.controls[j])
                row[f"flags_{j}"] = r.flags[j]
            writer.writerow(row)
    logger.info(f"Trace saved to: {path}")
    return path


def read_trace_csv(path: str) -> RunResult:
    with open(path, "r", newline="") as csvfile:
        reader = csv.DictReader(csvfile)
        joints = sum(1 for name in (reader.fieldnames or []) if name.startswith("angle_"))
        records = []
        for row in reader:
            records.append(TraceRecord(
                tick=int(row["tick"]),
                time=float(row["time"]),
                states=tuple((float(row[f"angle_{j}"]), float(row[f"velocity_{j}"])) for j in range(joints)),
                references=tuple((float(row[f"ref_angle_{j}"]), float(row[f"ref_velocity_{j}"])) for j in range(joints)),
                controls=tuple(float(row[f"control_{j}"]) for j in range(joints)),
                flags=tuple(int(row[f"flags_{j}"]) for j in range(joints)),
                control_seq=int(row["control_seq"]),
                control_index=int(row["control_index"]),
                actuator_hit=row["actuator_hit"] == "1",
                controller_fresh=row["controller_fresh"] == "1",
                rtt=float(row["rtt_ms"]) / 1000.0 if row["rtt_ms"] else None,
            ))
    return RunResult(records=records)


def log_summary(result: RunResult, label: str = "run") -> None:
    """Banner summary of one run"""
    logger.info("=" * 80)
    logger.info(f"RUN SUMMARY: {label}")
    logger.info("=" * 80)
    logger.info(f"Ticks: {len(result.records)}  wall time: {result.wall_time:.2f}s")
    for name, stats in sorted(result.channel_stats.items()):
        logger.info(f"  {name:<6} " + " ".join(f"{k}={v}" for k, v in stats.items()))
    if result.solver_stats:
        logger.info("  solver: " + ", ".join(f"{k}={v}" for k, v in sorted(result.solver_stats.items())))
    rtts = result.rtt_samples()
    if rtts.size:
        logger.info(f"  rtt: mean={np.mean(rtts) * 1000:.2f}ms max={np.max(rtts) * 1000:.2f}ms")
    logger.info("=" * 80)
