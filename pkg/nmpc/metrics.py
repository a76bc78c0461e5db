"""
Tracking metrics over run traces

ISE compares joint angles with their targets, RSS with an ideal trajectory
(by default the same scenario run over unimpaired channels). Both are means
of squared angle errors over samples, averaged over the joints considered.
"""

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Sequence, Union

import numpy as np

from nmpc.dynamics import ANGLE_CLAMPED, VELOCITY_CLAMPED, InvalidArgumentError, PlantConfig
from nmpc.scenario import scenario_hash
from nmpc.simloop import RunResult

TraceLike = Union[RunResult, np.ndarray, Sequence]


@dataclass
class MetricReport:
    ise: float
    rss: float
    ise_per_joint: list
    rss_per_joint: list
    n: int
    metadata: Dict = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        return cls(**json.loads(text))


def _angles(trace: TraceLike, joints: Optional[Sequence[int]] = None) -> np.ndarray:
    if isinstance(trace, RunResult):
        a = trace.angles()
    else:
        a = np.asarray(trace, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
    if a.size == 0:
        raise InvalidArgumentError("trace is empty")
    if joints is not None:
        a = a[:, list(joints)]
    return a


def _per_joint_mse(actual: np.ndarray, target: np.ndarray) -> np.ndarray:
    if actual.shape != target.shape:
        raise InvalidArgumentError(f"length mismatch: {actual.shape} vs {target.shape}")
    return np.mean((actual - target) ** 2, axis=0)


def ise(trace: TraceLike, targets: Optional[TraceLike] = None,
        joints: Optional[Sequence[int]] = None) -> float:
    """
    Mean squared angle error over joints and samples

    Args:
        trace: RunResult or (n, J) angle array
        targets: (n, J) target angles; defaults to the trace's own references
        joints: restrict to these joint indices
    """
    return float(np.mean(ise_per_joint(trace, targets, joints)))


def ise_per_joint(trace: TraceLike, targets: Optional[TraceLike] = None,
                  joints: Optional[Sequence[int]] = None) -> np.ndarray:
    actual = _angles(trace, joints)
    if targets is None:
        if not isinstance(trace, RunResult):
            raise InvalidArgumentError("targets are required for a bare angle array")
        target = trace.reference_angles()
        if joints is not None:
            target = target[:, list(joints)]
    else:
        target = _angles(targets, joints)
    return _per_joint_mse(actual, target)


def rss(trace: TraceLike, ideal: TraceLike, joints: Optional[Sequence[int]] = None) -> float:
    """Mean squared angle deviation from the ideal trajectory, averaged over joints"""
    return float(np.mean(rss_per_joint(trace, ideal, joints)))


def rss_per_joint(trace: TraceLike, ideal: TraceLike,
                  joints: Optional[Sequence[int]] = None) -> np.ndarray:
    return _per_joint_mse(_angles(trace, joints), _angles(ideal, joints))


def _window(result: RunResult, t_from: float, t_to: Optional[float]) -> np.ndarray:
    t = result.times()
    mask = t >= t_from - 1e-12
    if t_to is not None:
        mask &= t < t_to - 1e-12
    return mask


def overshoot(trace: RunResult, start: float, target: float, joint: int = 0,
              t_from: float = 0.0, t_to: Optional[float] = None) -> float:
    """Largest excursion past target in the direction of the step (0 if none)"""
    if target == start:
        raise InvalidArgumentError("step needs target != start")
    direction = math.copysign(1.0, target - start)
    angles = trace.angles()[_window(trace, t_from, t_to), joint]
    if angles.size == 0:
        raise InvalidArgumentError("no samples in the step window")
    return float(max(0.0, np.max(direction * (angles - target))))


def rise_delay(trace: RunResult, start: float, target: float, fraction: float = 0.9,
               joint: int = 0, t_from: float = 0.0, t_to: Optional[float] = None) -> float:
    """
    Time from t_from until the angle first covers fraction of the step

    Returns math.inf when the threshold is never reached inside the window.
    """
    if target == start:
        raise InvalidArgumentError("step needs target != start")
    if not 0 < fraction <= 1:
        raise InvalidArgumentError(f"fraction must be in (0, 1], got {fraction}")
    mask = _window(trace, t_from, t_to)
    times = trace.times()[mask]
    angles = trace.angles()[mask, joint]
    direction = math.copysign(1.0, target - start)
    reached = np.nonzero(direction * (angles - start) >= fraction * abs(target - start))[0]
    if reached.size == 0:
        return math.inf
    return float(times[reached[0]] - t_from)


def saturation_fraction(trace: RunResult, plant_cfg: Optional[PlantConfig] = None) -> float:
    """Fraction of ticks where any joint had a state bound active"""
    if not trace.records:
        raise InvalidArgumentError("trace is empty")
    active = np.any(trace.flags() & (ANGLE_CLAMPED | VELOCITY_CLAMPED), axis=1)
    if plant_cfg is not None:
        a, v = trace.angles(), trace.velocities()
        alo, ahi = plant_cfg.angle_limits
        vlo, vhi = plant_cfg.velocity_limits
        active |= np.any((a <= alo) | (a >= ahi) | (v <= vlo) | (v >= vhi), axis=1)
    return float(np.mean(active))


def metric_report(result: RunResult, ideal: Optional[TraceLike] = None,
                  joints: Optional[Sequence[int]] = None, ideal_kind: str = "closed_loop",
                  metadata: Optional[Dict] = None) -> MetricReport:
    """
    ISE and RSS of one run

    Without an ideal trace RSS is taken against the reference angles and
    ideal_kind is recorded as "reference".
    """
    ise_j = ise_per_joint(result, None, joints)
    if ideal is None:
        ideal_kind = "reference"
        ideal = result.reference_angles()
    rss_j = rss_per_joint(result, ideal, joints)
    meta = {"ideal": ideal_kind}
    if result.scenario is not None:
        meta["scenario_hash"] = scenario_hash(result.scenario)
        meta["seed"] = result.scenario.seed
    meta.update(metadata or {})
    return MetricReport(
        ise=float(np.mean(ise_j)),
        rss=float(np.mean(rss_j)),
        ise_per_joint=[float(v) for v in ise_j],
        rss_per_joint=[float(v) for v in rss_j],
        n=len(result.records),
        metadata=meta,
    )
