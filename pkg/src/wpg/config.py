"""Physical parameters, bounds and solver settings for the walking controller."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Any, Mapping


class ConfigError(ValueError):
    """Raised for invalid or unknown configuration values."""


@dataclass(frozen=True)
class GaitConfig:
    """All parameters of the abstract robot model and of both controller stages.

    Lengths are in metres, times in seconds, angles in radians. Defaults are the
    values of the reference robot (60 kg, 0.8 m CoM height, 8 kg.m^2 trunk).
    """

    # body
    m: float = 60.0
    g: float = 9.81
    h: float = 0.8
    j: float = 8.0
    tau_max: float = 150.0
    theta_min: float = -math.pi / 3
    theta_max: float = math.pi / 3

    # footstep bounds, relative to the stance foot
    L_min: float = -0.5
    L_max: float = 0.5
    W_right_min: float = -0.1
    W_right_max: float = 0.2
    W_left_min: float = -0.2
    W_left_max: float = 0.1
    T_min: float = 0.3
    T_max: float = 1.0

    # nominal gait
    T_nom_ss: float = 0.55
    T_ds: float = 0.1
    W_nom: float = 0.15
    foot_length: float = 0.2
    foot_width: float = 0.1
    apex_height: float = 0.05

    dt_s: float = 0.01

    # stage-1 weights: footstep, timing, DCM offset
    alpha1: float = 1.0
    alpha2: float = 1.0
    alpha3: float = 1000.0
    # stage-2 weights: ZMP tracking, DCM accel, trunk jerk, trunk rate, terminal DCM
    beta1: float = 1.0
    beta2: float = 1.0
    beta3: float = 1.0
    beta4: float = 1.0
    beta5: float = 100000.0
    # stage-2 unit scales: the cost applies beta_i * beta{i}_scale to each
    # term in SI; the weights above are relative importances, not SI prices
    beta1_scale: float = 1.0
    beta2_scale: float = 1.0
    beta3_scale: float = 1e-8
    beta4_scale: float = 3e-4
    beta5_scale: float = 1e5
    # trunk-angle regulation, already in SI
    beta_theta: float = 1.0
    # trunk angle and rate (times 1/omega0) left at the end of the horizon
    beta_trunk_end: float = 50.0
    # share of the trunk acceleration limit assumed available to stop the
    # trunk after the horizon
    trunk_brake_fraction: float = 0.8

    # failure detection
    dcm_excursion_max: float = 1.0
    infeasible_cycles: int = 3
    # least signed lateral clearance of a landing from the stance foot;
    # negative values admit crossover steps
    collision_margin: float = -0.1

    def __post_init__(self):
        for name in ("m", "g", "h", "j", "dt_s", "tau_max"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for lo, hi in (
            ("L_min", "L_max"),
            ("T_min", "T_max"),
            ("theta_min", "theta_max"),
            ("W_right_min", "W_right_max"),
            ("W_left_min", "W_left_max"),
        ):
            if not getattr(self, lo) < getattr(self, hi):
                raise ConfigError(f"{lo} must be smaller than {hi}")
        weights = [getattr(self, f"alpha{i}") for i in (1, 2, 3)]
        weights += [getattr(self, f"beta{i}") for i in range(1, 6)]
        weights += [getattr(self, f"beta{i}_scale") for i in range(1, 6)] + [self.beta_theta, self.beta_trunk_end]
        if min(weights) < 0:
            raise ConfigError("weights must be non-negative")
        if any(self.beta5 <= getattr(self, f"beta{i}") for i in range(1, 5)):
            raise ConfigError("beta5 must dominate beta1..beta4")
        if not (self.W_nom <= self.W_right_max and -self.W_nom >= self.W_left_min):
            raise ConfigError("W_nom lies outside the stance-side width bounds")
        if self.T_nom_ss <= 0 or self.T_ds < 0:
            raise ConfigError("phase durations must be positive")
        if not self.T_min <= self.T_nom <= self.T_max:
            raise ConfigError(f"nominal step duration {self.T_nom} outside [T_min, T_max]")
        if not 0 < self.trunk_brake_fraction <= 1:
            raise ConfigError("trunk_brake_fraction must lie in (0, 1]")
        if self.foot_length < 0 or self.foot_width < 0:
            raise ConfigError("foot_length and foot_width must be non-negative")

    @property
    def T_nom(self) -> float:
        """Nominal step period (single plus double support)."""
        return self.T_nom_ss + self.T_ds

    @property
    def omega0(self) -> float:
        return math.sqrt(self.g / self.h)

    @property
    def theta_ddot_max(self) -> float:
        return self.tau_max / self.j

    def replace(self, **changes: Any) -> "GaitConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "GaitConfig":
        """Build a config from overrides; unknown keys are rejected."""
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kwargs = {}
        for key, value in values.items():
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"config key {key!r} must be numeric, got {value!r}")
            kwargs[key] = int(value) if known[key].type in ("int", int) else float(value)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


DEFAULT_CONFIG = GaitConfig()
