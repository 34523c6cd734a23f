"""Run configuration: scenario geometry, controller and scheme parameters,
and the flat-key config-file loader.

Every key has a documented default; a config file (YAML or JSON, one flat
mapping with dotted keys) or an override dict replaces individual values.
Unknown keys and badly typed values raise ConfigError naming the key.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .beaconing import JbConfig, JbeConfig
from .channel import ChannelConfig
from .controllers import CaccGains
from .dynamics import ActuationModel


class ConfigError(Exception):
    """A config file or override could not be validated."""


# lanes, platoons per lane, vehicles per platoon
DENSITY_PRESETS: dict[str, tuple[int, int, int]] = {
    "low": (4, 2, 15),    # 120 vehicles
    "high": (4, 8, 15),   # 480 vehicles
    "desk": (1, 2, 15),   # 30 vehicles, seconds-scale runs for tests
}


@dataclass(frozen=True)
class ScenarioConfig:
    """World geometry and run framing."""

    lanes: int = 4
    platoons_per_lane: int = 2
    platoon_size: int = 15
    initial_speed: float = 27.78   # m/s (100 km/h)
    intra_gap: float = 5.0         # m, bumper-to-bumper inside a platoon
    time_headway: float = 1.2      # s, spacing policy between platoons
    duration: float = 40.0         # s
    seed: int = 1
    dt: float = 0.01               # s, dynamics tick
    vehicle_length: float = 4.0    # m

    def __post_init__(self) -> None:
        if self.platoon_size < 2:
            raise ValueError("platoon size must be at least 2")
        if self.lanes < 1 or self.platoons_per_lane < 1:
            raise ValueError("need at least one lane and one platoon per lane")
        for name in ("initial_speed", "intra_gap", "time_headway", "duration", "dt", "vehicle_length"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def total_vehicles(self) -> int:
        return self.lanes * self.platoons_per_lane * self.platoon_size


@dataclass(frozen=True)
class ExperimentConfig:
    """Timing and magnitudes of the injected follower dynamics."""

    start_time: float = 5.0        # s, first disturbance
    slowdown_rate: float = -2.0    # m/s2, deceleration used by the slowdown maneuver
    slowdown_speed: float = 22.22  # m/s (80 km/h), slowdown target
    stop_rate: float = -6.0        # m/s2, emergency braking rate

    def __post_init__(self) -> None:
        if self.start_time <= 0:
            raise ValueError("experiment start time must be positive")
        if self.slowdown_rate >= 0 or self.stop_rate >= 0:
            raise ValueError("maneuver rates are decelerations and must be negative")
        if self.slowdown_speed < 0:
            raise ValueError("slowdown target speed cannot be negative")


@dataclass(frozen=True)
class SimulationSettings:
    """Everything one run needs, grouped by module."""

    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    cacc: CaccGains = field(default_factory=CaccGains)
    actuation: ActuationModel = field(default_factory=ActuationModel)
    jb: JbConfig = field(default_factory=JbConfig)
    jbe: JbeConfig = field(default_factory=JbeConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    cruise_gain: float = 0.5       # 1/s, leader speed controller
    slot_offset: float = 0.002     # s, chain transmission offset after the trigger
    retry_limit: int = 5           # retransmissions per special beacon
    backoff_window: float = 256e-6  # s, carrier-sense backoff draw range


_FLOAT_KEYS: dict[str, tuple[str, str, float]] = {
    # key -> (group, field, default)
    "scenario.initial_speed": ("scenario", "initial_speed", 27.78),
    "scenario.intra_gap": ("scenario", "intra_gap", 5.0),
    "scenario.time_headway": ("scenario", "time_headway", 1.2),
    "scenario.duration": ("scenario", "duration", 40.0),
    "scenario.dt": ("scenario", "dt", 0.01),
    "scenario.vehicle_length": ("scenario", "vehicle_length", 4.0),
    "cacc.alpha1": ("cacc", "alpha1", 0.5),
    "cacc.alpha2": ("cacc", "alpha2", 0.5),
    "cacc.alpha3": ("cacc", "alpha3", -0.04),
    "cacc.alpha4": ("cacc", "alpha4", -0.1),
    "cacc.alpha5": ("cacc", "alpha5", -0.3),
    "cacc.desired_gap": ("cacc", "desired_gap", 5.0),
    "actuation.lag": ("actuation", "lag", 0.5),
    "actuation.max_accel": ("actuation", "max_acceleration", 3.0),
    "actuation.max_decel": ("actuation", "max_deceleration", -8.0),
    "jb.min_interval": ("jb", "min_interval", 0.1),
    "jb.max_interval": ("jb", "max_interval", 0.4),
    "jb.responsiveness": ("jb", "responsiveness", 1.0),
    "jb.max_jerk": ("jb", "max_jerk", 2.0),
    "jbe.offset": ("jbe", "slight_decel_offset", 0.5),
    "jbe.emergency_threshold": ("jbe", "emergency_threshold", -5.0),
    "jbe.revert_time": ("jbe", "revert_time", 20.0),
    "channel.bitrate": ("channel", "bitrate", 6e6),
    "channel.overhead": ("channel", "frame_overhead", 100e-6),
    "channel.range": ("channel", "comm_range", 500.0),
    "channel.tx_power": ("channel", "tx_power_mw", 100.0),
    "experiment.start": ("experiment", "start_time", 5.0),
    "experiment.slowdown_rate": ("experiment", "slowdown_rate", -2.0),
    "experiment.slowdown_speed": ("experiment", "slowdown_speed", 22.22),
    "experiment.stop_rate": ("experiment", "stop_rate", -6.0),
    "cruise.gain": ("", "cruise_gain", 0.5),
    "protocol.slot_offset": ("", "slot_offset", 0.002),
    "protocol.backoff_window": ("", "backoff_window", 256e-6),
}

_INT_KEYS: dict[str, tuple[str, str, int]] = {
    "scenario.lanes": ("scenario", "lanes", 4),
    "scenario.platoons_per_lane": ("scenario", "platoons_per_lane", 2),
    "scenario.platoon_size": ("scenario", "platoon_size", 15),
    "scenario.seed": ("scenario", "seed", 1),
    "protocol.retry_limit": ("", "retry_limit", 5),
}

_STR_KEYS: dict[str, tuple[str, str, str]] = {
    "scenario.density": ("", "density", "low"),
    "jbe.conflict_policy": ("jbe", "conflict_policy", "latest"),
}

KNOWN_KEYS = set(_FLOAT_KEYS) | set(_INT_KEYS) | set(_STR_KEYS)

_GEOMETRY_KEYS = ("scenario.lanes", "scenario.platoons_per_lane", "scenario.platoon_size")


def _coerce_float(key: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    return float(value)


def _coerce_int(key: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    return value


def _coerce_str(key: str, value: Any) -> str:
    if not isinstance(value, str):
        raise ConfigError(f"{key}: expected a string, got {value!r}")
    return value


def load_config(
    path: Optional[str | Path] = None,
    overrides: Optional[dict[str, Any]] = None,
) -> SimulationSettings:
    """Build validated settings from defaults, an optional file, and overrides.

    The file must parse to one flat mapping of dotted keys. `scenario.density`
    selects a geometry preset; explicit lane/platoon keys take precedence over
    the preset.
    """
    raw: dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        try:
            loaded = yaml.safe_load(p.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {p}")
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file {p} does not parse: {exc}")
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {p} must contain a flat mapping")
        raw.update(loaded)
    if overrides:
        raw.update(overrides)

    for key in raw:
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown config key: {key}")

    values: dict[str, Any] = {}
    for key, (_, _, default) in _FLOAT_KEYS.items():
        values[key] = _coerce_float(key, raw[key]) if key in raw else default
    for key, (_, _, default) in _INT_KEYS.items():
        values[key] = _coerce_int(key, raw[key]) if key in raw else default
    for key, (_, _, default) in _STR_KEYS.items():
        values[key] = _coerce_str(key, raw[key]) if key in raw else default

    density = values["scenario.density"]
    if density not in DENSITY_PRESETS:
        raise ConfigError(
            f"scenario.density: unknown preset {density!r} (choose from {sorted(DENSITY_PRESETS)})"
        )
    lanes, per_lane, size = DENSITY_PRESETS[density]
    geometry = {"scenario.lanes": lanes, "scenario.platoons_per_lane": per_lane, "scenario.platoon_size": size}
    for key in _GEOMETRY_KEYS:
        if key in raw:  # explicit geometry beats the preset
            geometry[key] = values[key]

    def group(prefix: str, **extra: Any) -> dict[str, Any]:
        out = dict(extra)
        for key, (grp, fieldname, _) in {**_FLOAT_KEYS, **_INT_KEYS, **_STR_KEYS}.items():
            if grp == prefix and key not in _GEOMETRY_KEYS and key != "scenario.density":
                out[fieldname] = values[key]
        return out

    try:
        scenario = ScenarioConfig(
            lanes=geometry["scenario.lanes"],
            platoons_per_lane=geometry["scenario.platoons_per_lane"],
            platoon_size=geometry["scenario.platoon_size"],
            **group("scenario"),
        )
        settings = SimulationSettings(
            scenario=scenario,
            cacc=CaccGains(**group("cacc")),
            actuation=ActuationModel(**group("actuation")),
            jb=JbConfig(**group("jb")),
            jbe=JbeConfig(**group("jbe")),
            channel=ChannelConfig(**group("channel")),
            experiment=ExperimentConfig(**group("experiment")),
            cruise_gain=values["cruise.gain"],
            slot_offset=values["protocol.slot_offset"],
            retry_limit=values["protocol.retry_limit"],
            backoff_window=values["protocol.backoff_window"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc))
    if settings.cruise_gain <= 0:
        raise ConfigError("cruise.gain must be positive")
    if settings.slot_offset <= 0:
        raise ConfigError("protocol.slot_offset must be positive")
    if settings.retry_limit < 0:
        raise ConfigError("protocol.retry_limit cannot be negative")
    if settings.backoff_window <= 0:
        raise ConfigError("protocol.backoff_window must be positive")
    return settings
