import numpy as np
import pytest

from strikesim.config.settings import GeneratorConfig, SimConfig
from strikesim.robot.kinematics import load_robot
from strikesim.simgen.dataset import generate_dataset


def clean_generator_config(**overrides) -> GeneratorConfig:
    """Noise-free, fully predictable generator settings"""
    fields = dict(
        seed=11,
        segment_count=40,
        ball_noise=0.0,
        sigma_obs=0.0,
        predictability=1.0,
        spin_sigma=0.0,
        dropout_rate=0.0,
        observe_through_cameras=False,
    )
    fields.update(overrides)
    return GeneratorConfig(**fields)


@pytest.fixture(scope="session")
def robot():
    return load_robot()


@pytest.fixture(scope="session")
def sim_config():
    return SimConfig()


@pytest.fixture(scope="session")
def clean_config():
    return clean_generator_config()


@pytest.fixture(scope="session")
def clean_dataset(clean_config):
    return generate_dataset(clean_config)


@pytest.fixture(scope="session")
def noisy_dataset():
    config = GeneratorConfig(seed=5, segment_count=60, observe_through_cameras=False)
    return generate_dataset(config)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
