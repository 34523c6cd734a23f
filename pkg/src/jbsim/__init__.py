"""Deterministic discrete-event simulator of CACC platoons with jerk-adaptive
beaconing (JB) and its follower-dynamics extension (JBE) over a simplified
802.11p-style broadcast channel."""

from .beaconing import (
    JbConfig,
    JbeConfig,
    JbeFollowerState,
    JbeLeaderState,
    jb_alpha,
    jb_interval,
    jbe_follower_handle,
    jbe_follower_monitor,
    jbe_leader_handle,
    jerk,
)
from .channel import BusyLedger, Channel, ChannelConfig, airtime, carrier_sense_defer
from .config import ConfigError, ScenarioConfig, SimulationSettings, load_config
from .controllers import CaccGains, RemoteVehicleView, dead_reckon, leader_cruise, path_cacc
from .core import Beacon, BeaconType, EventQueue, SimulationError, VehicleState
from .dynamics import ActuationModel, radar_distance, step_vehicle
from .metrics import RunMetrics, aggregate_cbr, global_min_distance, string_stability_check, write_outputs
from .scenario import (
    ExperimentKind,
    Simulation,
    build_highway,
    inject_follower_slowdown,
    inject_follower_stopping,
    inject_string_stability,
    run_simulation,
)

__all__ = [
    "ActuationModel",
    "Beacon",
    "BeaconType",
    "BusyLedger",
    "CaccGains",
    "Channel",
    "ChannelConfig",
    "ConfigError",
    "EventQueue",
    "ExperimentKind",
    "JbConfig",
    "JbeConfig",
    "JbeFollowerState",
    "JbeLeaderState",
    "RemoteVehicleView",
    "RunMetrics",
    "ScenarioConfig",
    "Simulation",
    "SimulationError",
    "SimulationSettings",
    "VehicleState",
    "aggregate_cbr",
    "airtime",
    "build_highway",
    "carrier_sense_defer",
    "dead_reckon",
    "global_min_distance",
    "inject_follower_slowdown",
    "inject_follower_stopping",
    "inject_string_stability",
    "jb_alpha",
    "jb_interval",
    "jbe_follower_handle",
    "jbe_follower_monitor",
    "jbe_leader_handle",
    "jerk",
    "leader_cruise",
    "load_config",
    "path_cacc",
    "radar_distance",
    "run_simulation",
    "step_vehicle",
    "string_stability_check",
    "write_outputs",
]

__version__ = "0.1.0"
