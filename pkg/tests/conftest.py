from pathlib import Path
from typing import Callable

import pytest

from metrics.collector import MetricsConfig
from network.mac import MacConfig
from network.traffic import TrafficConfig
from scenario.config import MobilityConfig, ScenarioConfig


REPO_ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture
def write_file(tmp_path: Path) -> Callable[[str, str], Path]:
    def _write(name: str, content: str) -> Path:
        path = tmp_path / name
        path.write_text(content, encoding="utf-8")
        return path
    return _write


@pytest.fixture
def parked_trajectory(write_file) -> Path:
    """A 1 m loop next to the center BS: no handoffs, near-constant SINR"""
    return write_file("parked.txt", "10 0\n10 1\n")


@pytest.fixture
def constant_trace(write_file) -> Path:
    return write_file("constant.txt", "# constant frames\n1000\n")


@pytest.fixture
def make_config(parked_trajectory: Path, constant_trace: Path) -> Callable[..., ScenarioConfig]:
    """Small single-scenario config; keyword arguments override any field"""
    def _make(**overrides) -> ScenarioConfig:
        fields = dict(
            scenario_id="t-scenario",
            mcs_mode="64qam34",
            speed=50.0,
            pathloss="free_space",
            service_class="rtps",
            seed=1,
            duration=2.0,
            mobility=MobilityConfig(trajectory=str(parked_trajectory)),
            traffic=TrafficConfig(video_trace=str(constant_trace), audio_frame_bytes=0),
            mac=MacConfig(background_stations=0),
            metrics=MetricsConfig(),
        )
        fields.update(overrides)
        return ScenarioConfig(**fields)
    return _make
