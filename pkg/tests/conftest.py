import socket
from dataclasses import replace

import pytest

from nmpc.controller import MpcConfig
from nmpc.dynamics import PlantConfig, discretize
from nmpc.netsim import ChannelConfig
from nmpc.scenario import ScenarioConfig, SineReference, StepReference


@pytest.fixture(scope="session")
def plant_cfg() -> PlantConfig:
    return PlantConfig()


@pytest.fixture(scope="session")
def model():
    return discretize(0.01)


@pytest.fixture(scope="session")
def mpc_cfg() -> MpcConfig:
    return MpcConfig()


@pytest.fixture()
def step_scenario() -> ScenarioConfig:
    # Short and small so closed-loop tests stay fast
    return ScenarioConfig(
        duration=2.0,
        joint_count=2,
        seed=1,
        mpc=MpcConfig(horizon=15),
        reference=StepReference(target=1.0),
    )


@pytest.fixture()
def sine_scenario() -> ScenarioConfig:
    return ScenarioConfig(
        duration=6.0,
        joint_count=2,
        seed=7,
        reference=SineReference(amplitude=0.5, frequency=0.2),
        reference_joints=(0,),
    )


def _impaired(cfg: ScenarioConfig, fwd: float, bwd: float, fwd_loss: float = 0.0,
              bwd_loss: float = 0.0) -> ScenarioConfig:
    return replace(
        cfg,
        fwd_channel=ChannelConfig(base_delay=fwd, loss_rate=fwd_loss),
        bwd_channel=ChannelConfig(base_delay=bwd, loss_rate=bwd_loss),
    )


@pytest.fixture(scope="session")
def impaired():
    return _impaired


@pytest.fixture(scope="session")
def udp_available():
    # Skip socket tests where loopback UDP cannot be bound
    try:
        s = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        s.bind(("127.0.0.1", 0))
        s.close()
    except OSError as e:
        pytest.skip(f"loopback UDP unavailable: {e}")
