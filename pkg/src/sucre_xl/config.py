"""Scenario parameters for the XL-MIMO random-access simulator."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

# Thermal floor -174 dBm/Hz over 20 MHz with a 7 dB noise figure: about -94 dBm.
DEFAULT_NOISE_W = 10.0 ** (-124.0 / 10.0)

VR_MODES = ("bernoulli", "full")
CHANNEL_MODELS = ("iid", "correlated")


class ConfigError(ValueError):
    """Raised when a configuration value is missing, mistyped, or inconsistent."""


@dataclass(frozen=True)
class ScenarioConfig:
    """All scalar parameters of cell, array, protocol and campaign.

    Powers are in watts, distances in meters. ``M_b`` is derived from ``M`` and
    ``B``. Defaults reproduce the crowded urban-micro scenario: a 100 m ULA of
    500 antennas on the edge of a 200 m square cell with 1000 inactive users.
    """

    M: int = 500
    B: int = 10
    array_length_m: float = 100.0
    cell_side_m: float = 200.0
    K: int = 1000
    P_a: float = 0.01
    tau_p: int = 10
    P_b: float = 0.5
    rho: float = 1.0
    q: float = 1.0
    sigma2: float = DEFAULT_NOISE_W
    kappa: float = 3.8
    g_dB: float = -34.53
    sigma_sf_dB: float = 10.0
    r: float = 0.7
    delta: float = -1.0
    retry_prob: float = 0.5
    max_attempts: int = 10
    n_blocks: int = 10_000
    vr_mode: str = "bernoulli"
    channel: str = "iid"
    d_min_m: float = 1.0
    admit_disjoint_subset: bool = False
    M_b: int = field(init=False)

    def __post_init__(self):
        self.validate()
        object.__setattr__(self, "M_b", self.M // self.B)

    def validate(self) -> None:
        for name in ("M", "B", "K", "tau_p", "max_attempts"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer, got {getattr(self, name)}")
        if self.n_blocks < 0:
            raise ConfigError(f"n_blocks must be >= 0, got {self.n_blocks}")
        if self.M % self.B != 0:
            raise ConfigError(f"B={self.B} must divide M={self.M}")
        for name in ("P_a", "P_b", "retry_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must be a probability, got {p}")
        if self.P_b == 0.0:
            raise ConfigError("P_b must be > 0: no visibility region can be drawn")
        if not self.sigma2 > 0.0:
            raise ConfigError(f"sigma2 must be > 0, got {self.sigma2}")
        for name in ("rho", "q", "sigma_sf_dB"):
            if getattr(self, name) < 0.0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not 0.0 < self.r < 1.0:
            raise ConfigError(f"r must lie in (0, 1), got {self.r}")
        if self.array_length_m <= 0 or self.cell_side_m <= 0:
            raise ConfigError("array_length_m and cell_side_m must be positive")
        if self.array_length_m > self.cell_side_m:
            raise ConfigError("array_length_m cannot exceed cell_side_m")
        if self.d_min_m <= 0:
            raise ConfigError(f"d_min_m must be positive, got {self.d_min_m}")
        if self.vr_mode not in VR_MODES:
            raise ConfigError(f"vr_mode must be one of {VR_MODES}, got {self.vr_mode!r}")
        if self.channel not in CHANNEL_MODELS:
            raise ConfigError(f"channel must be one of {CHANNEL_MODELS}, got {self.channel!r}")

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        """Flat key-value form; ``M_b`` is omitted because it is derived."""
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.init}

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "ScenarioConfig":
        """Build a config from a flat document, filling defaults and checking types."""
        known = {f.name: f for f in dataclasses.fields(cls) if f.init}
        kwargs = {}
        for key, value in doc.items():
            if key not in known:
                raise ConfigError(f"unknown configuration key {key!r}")
            kwargs[key] = _coerce(key, value, type(getattr(_DEFAULTS, key)))
        return cls(**kwargs)


def _coerce(key: str, value: Any, kind: type) -> Any:
    if kind is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{key} expects a boolean, got {value!r}")
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} expects an integer, got {value!r}")
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"{key} expects an integer, got {value!r}")
        return int(value)
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} expects a number, got {value!r}")
        value = float(value)
        if math.isnan(value):
            raise ConfigError(f"{key} must not be NaN")
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key} expects a string, got {value!r}")
        return value
    raise ConfigError(f"{key}: unsupported type {kind}")  # pragma: no cover


_DEFAULTS = ScenarioConfig()
