import numpy as np
import pytest

from starisac.config import scenario_from_dict
from starisac.geometry import ArrayGeometry

F0 = 28e9
LAMBDA0 = 299_792_458.0 / F0


@pytest.fixture
def lambda0():
    return LAMBDA0


@pytest.fixture
def dcm16():
    return ArrayGeometry.planar(16, 16, LAMBDA0 / 2, role="dcm")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_scenario(**overrides):
    raw = {
        "f0": F0, "N": 4, "M": 4, "L_h": 4, "L_v": 4,
        "budget": {"c_r_db": 50, "c_t_db": 20},
        "target": {"theta_deg": 30, "phi_deg": 20, "d": 30, "velocity": [1.0, -2.0, -1.0]},
        "n_slots": 5, "trials": 2, "seed": 3,
    }
    raw.update(overrides)
    return scenario_from_dict(raw)


@pytest.fixture
def scenario():
    return small_scenario()
