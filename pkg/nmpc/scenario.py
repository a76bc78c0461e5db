"""
Scenario descriptions: reference signals, closed-loop experiment config
and their JSON form
"""

import hashlib
import json
import math
from dataclasses import dataclass, field, fields, replace
from typing import Dict, Optional, Tuple, Union

from nmpc.controller import MpcConfig, PidConfig, ReferenceTarget
from nmpc.dynamics import InvalidArgumentError, PlantConfig
from nmpc.netsim import ChannelConfig, derive_seed


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class StepReference:
    target: float
    at: float = 0.0
    initial: float = 0.0
    kind: str = "step"


@dataclass(frozen=True)
class MultiStepReference:
    # ((time, target), ...) with strictly increasing times
    schedule: Tuple[Tuple[float, float], ...]
    initial: float = 0.0
    kind: str = "multistep"


@dataclass(frozen=True)
class SineReference:
    amplitude: float
    frequency: float
    offset: float = 0.0
    # Radians; pi/2 starts the joint at the crest, at rest
    phase: float = 0.0
    kind: str = "sine"


ReferenceSpec = Union[StepReference, MultiStepReference, SineReference]

_REFERENCE_KINDS = {
    "step": StepReference,
    "multistep": MultiStepReference,
    "sine": SineReference,
}


def reference_signal(spec: Optional[ReferenceSpec], t: float) -> ReferenceTarget:
    """Target angle and velocity of one joint at time t"""
    if t < 0:
        raise InvalidArgumentError(f"t must be >= 0, got {t}")
    if spec is None:
        return ReferenceTarget(0.0, 0.0)
    if isinstance(spec, SineReference):
        w = 2.0 * math.pi * spec.frequency
        return ReferenceTarget(
            spec.offset + spec.amplitude * math.sin(w * t + spec.phase),
            spec.amplitude * w * math.cos(w * t + spec.phase),
        )
    if isinstance(spec, StepReference):
        return ReferenceTarget(spec.target if t >= spec.at else spec.initial, 0.0)
    target = spec.initial
    for at, value in spec.schedule:
        if t >= at:
            target = value
        else:
            break
    return ReferenceTarget(target, 0.0)


@dataclass(frozen=True)
class ScenarioConfig:
    duration: float = 10.0
    Ts: float = 0.01
    joint_count: int = 6
    seed: int = 0
    controller_kind: str = "mpc"
    mpc: MpcConfig = field(default_factory=MpcConfig)
    pid: PidConfig = field(default_factory=PidConfig)
    fwd_channel: ChannelConfig = field(default_factory=ChannelConfig)
    bwd_channel: ChannelConfig = field(default_factory=ChannelConfig)
    reference: Optional[ReferenceSpec] = None
    # Joints following the reference; the others hold angle 0
    reference_joints: Optional[Tuple[int, ...]] = None
    initial_angles: Optional[Tuple[float, ...]] = None
    forward_prediction_enabled: bool = True
    send_full_horizon: bool = True
    request_driven: bool = True
    controller_period_ticks: int = 1
    # The plant samples and sends STATE every state_period_ticks ticks
    state_period_ticks: int = 1
    disturbance_std: float = 0.0

    def __post_init__(self):
        validate_scenario(self)

    @property
    def tick_count(self) -> int:
        """Number of trace records: floor(duration / Ts) + 1"""
        return int(math.floor(self.duration / self.Ts + 1e-9)) + 1

    def plant_config(self) -> PlantConfig:
        return PlantConfig(
            joint_count=self.joint_count,
            Ts=self.Ts,
            angle_limits=tuple(self.mpc.angle_limits),
            velocity_limits=tuple(self.mpc.velocity_limits),
            input_limits=tuple(self.mpc.input_limits),
        )

    def joint_reference(self, joint: int) -> Optional[ReferenceSpec]:
        if self.reference_joints is None or joint in self.reference_joints:
            return self.reference
        return None

    def seeded_channels(self) -> Tuple[ChannelConfig, ChannelConfig]:
        """Channel configs with substream seeds derived from the scenario seed"""
        return (
            replace(self.fwd_channel, seed=derive_seed(self.seed, "fwd")),
            replace(self.bwd_channel, seed=derive_seed(self.seed, "bwd")),
        )

    def to_dict(self) -> Dict:
        return _to_plain(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: Dict) -> "ScenarioConfig":
        return scenario_from_dict(data)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"scenario is not valid JSON: {e}")
        return scenario_from_dict(data)


def validate_scenario(cfg: ScenarioConfig) -> None:
    if not cfg.duration > 0:
        raise ConfigError(f"duration must be positive, got {cfg.duration}")
    if not (math.isfinite(cfg.Ts) and cfg.Ts > 0):
        raise ConfigError(f"Ts must be positive, got {cfg.Ts}")
    if cfg.joint_count < 1:
        raise ConfigError(f"joint_count must be >= 1, got {cfg.joint_count}")
    if cfg.controller_kind not in ("mpc", "pid"):
        raise ConfigError(f"controller_kind must be 'mpc' or 'pid', got {cfg.controller_kind!r}")
    if cfg.controller_period_ticks < 1:
        raise ConfigError("controller_period_ticks must be >= 1")
    if cfg.state_period_ticks < 1:
        raise ConfigError("state_period_ticks must be >= 1")
    if cfg.disturbance_std < 0:
        raise ConfigError("disturbance_std must be >= 0")
    if cfg.initial_angles is not None and len(cfg.initial_angles) != cfg.joint_count:
        raise ConfigError(f"initial_angles needs {cfg.joint_count} values")
    if cfg.reference_joints is not None:
        for j in cfg.reference_joints:
            if not 0 <= j < cfg.joint_count:
                raise ConfigError(f"reference joint {j} out of range")

    lo, hi = cfg.mpc.angle_limits
    ref = cfg.reference
    if isinstance(ref, SineReference):
        if ref.frequency <= 0:
            raise ConfigError("sine frequency must be positive")
        if ref.offset - abs(ref.amplitude) < lo or ref.offset + abs(ref.amplitude) > hi:
            raise ConfigError("sine amplitude + offset exceeds the angle bounds")
    elif isinstance(ref, MultiStepReference):
        times = [t for t, _ in ref.schedule]
        if not times:
            raise ConfigError("multistep schedule must not be empty")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError("multistep schedule times must be strictly increasing")
        for _, target in ref.schedule:
            if not lo <= target <= hi:
                raise ConfigError(f"multistep target {target} outside angle bounds")
    elif isinstance(ref, StepReference):
        if not lo <= ref.target <= hi:
            raise ConfigError(f"step target {ref.target} outside angle bounds")


def _to_plain(obj):
    if hasattr(obj, "__dataclass_fields__"):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [_to_plain(v) for v in obj]
    return obj


def _tupled(value):
    if isinstance(value, list):
        return tuple(_tupled(v) for v in value)
    return value


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object, got {type(data).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(unknown)}")
    try:
        return cls(**{k: _tupled(v) for k, v in data.items()})
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{path}: {e}")


def reference_from_dict(data: Optional[Dict]) -> Optional[ReferenceSpec]:
    if data is None:
        return None
    if not isinstance(data, dict) or "kind" not in data:
        raise ConfigError("reference: expected an object with a 'kind'")
    cls = _REFERENCE_KINDS.get(data["kind"])
    if cls is None:
        raise ConfigError(f"reference.kind: unknown kind {data['kind']!r}")
    return _build(cls, data, "reference")


def scenario_from_dict(data: Dict) -> ScenarioConfig:
    """Build a ScenarioConfig from its JSON object form; missing keys take defaults"""
    if not isinstance(data, dict):
        raise ConfigError("scenario: expected an object")
    data = dict(data)
    nested = {
        "mpc": MpcConfig,
        "pid": PidConfig,
        "fwd_channel": ChannelConfig,
        "bwd_channel": ChannelConfig,
    }
    kwargs = {}
    for key, cls in nested.items():
        if key in data:
            kwargs[key] = _build(cls, data.pop(key), key)
    if "reference" in data:
        kwargs["reference"] = reference_from_dict(data.pop("reference"))
    known = {f.name for f in fields(ScenarioConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"scenario: unknown key(s) {', '.join(unknown)}")
    kwargs.update({k: _tupled(v) for k, v in data.items()})
    try:
        return ScenarioConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"scenario: {e}")


def load_scenario(path: str) -> ScenarioConfig:
    try:
        with open(path, "r") as f:
            return ScenarioConfig.from_json(f.read())
    except OSError as e:
        raise ConfigError(f"cannot read scenario {path}: {e}")


def scenario_hash(cfg: ScenarioConfig) -> str:
    return hashlib.sha256(cfg.to_json().encode("utf-8")).hexdigest()
