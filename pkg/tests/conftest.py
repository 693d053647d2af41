import numpy as np
import pytest

from mobilestyle import config as configs
from mobilestyle.weights import init_random


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_mobile_weights():
    return init_random(configs.tiny_mobile(64), seed=11)


@pytest.fixture(scope="session")
def micro_mobile_config():
    # small enough for straight-line loop oracles
    return configs.GeneratorConfig(target_resolution=16, variant="mobile", style_dim=4,
                                   mapping_layers=2, channels={4: 8, 8: 8})
