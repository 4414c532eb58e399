import numpy as np
import pytest

from lidarnav.env import RewardConfig
from lidarnav.robot import ROBOT_PROFILES
from lidarnav.world import LIDAR_CONFIGS, preset_world_spec


@pytest.fixture
def lidar():
    return LIDAR_CONFIGS["default"]


@pytest.fixture
def jetbot():
    return ROBOT_PROFILES["jetbot"]


@pytest.fixture
def reward_cfg():
    return RewardConfig()


@pytest.fixture
def empty_spec():
    return preset_world_spec("empty")


@pytest.fixture
def static_spec():
    return preset_world_spec("static_default")


@pytest.fixture
def crossing_spec():
    return preset_world_spec("crossing")


@pytest.fixture
def rng():
    return np.random.default_rng(0)
