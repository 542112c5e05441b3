import numpy as np
import pytest

from reludepth import gates


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)


@pytest.fixture
def gate_cfg() -> gates.GateConfig:
    return gates.GateConfig(theta=0.5, l_tilde=2, epsilon=0.01)
