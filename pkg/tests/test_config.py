import math

import pytest

from wpg.config import ConfigError, GaitConfig


def test_defaults():
    c = GaitConfig()
    assert c.omega0 == pytest.approx(math.sqrt(9.81 / 0.8))
    assert c.T_nom == pytest.approx(0.65)
    assert c.theta_ddot_max == 18.75


def test_from_mapping_overrides():
    c = GaitConfig.from_mapping({"foot_length": 0.25, "infeasible_cycles": 5})
    assert c.foot_length == 0.25
    assert c.infeasible_cycles == 5 and isinstance(c.infeasible_cycles, int)


@pytest.mark.parametrize(
    "values",
    [
        {"bogus": 1.0},
        {"m": "heavy"},
        {"m": True},
        {"m": -1.0},
        {"T_min": 1.2},
        {"beta5": 0.5},
        {"alpha1": -1.0},
        {"W_nom": 0.3},
        {"foot_width": -0.1},
    ],
)
def test_invalid_values_rejected(values):
    with pytest.raises(ConfigError):
        GaitConfig.from_mapping(values)


def test_round_trip_through_dict():
    c = GaitConfig().replace(dt_s=0.005)
    assert GaitConfig.from_mapping(c.to_dict()) == c
