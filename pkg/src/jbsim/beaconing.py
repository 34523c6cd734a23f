"""Adaptive beaconing: the jerk-driven interval (JB) and the follower-dynamics
extension (JBE).

JB: the leader's beacon cadence shrinks from `max_interval` toward
`min_interval` as the magnitude of its jerk (change in commanded acceleration
between consecutive control actions) grows; followers transmit in a slotted
chain triggered by their immediate predecessor, with a timer fallback.

JBE adds special beacon types. A follower that decelerates on its own
initiative commands the leader to stop (emergency) or to adopt a lower target
speed, and later releases it back to its saved state. Leaders ignore normal
beacons from followers; followers ignore special beacons entirely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

from .core import Beacon, BeaconType, SimTime, has_ack, micros


class ProtocolViolation(Exception):
    """A beacon broke the wire-format rules; the frame is dropped and counted."""


@dataclass(frozen=True)
class JbConfig:
    """Parameters of the jerk-adaptive interval."""

    min_interval: float = 0.1   # s, floor of the beacon interval
    max_interval: float = 0.4   # s, ceiling of the beacon interval
    responsiveness: float = 1.0  # exponent p applied to |jerk|
    max_jerk: float = 2.0       # m/s2, jerk at which the interval saturates at the floor

    def __post_init__(self) -> None:
        if not 0 < self.min_interval < self.max_interval:
            raise ValueError("need 0 < min_interval < max_interval")
        if self.responsiveness <= 0:
            raise ValueError("responsiveness must be positive")
        if self.max_jerk <= 0:
            raise ValueError("max_jerk must be positive")


@dataclass(frozen=True)
class JbeConfig:
    """Parameters of the follower-dynamics extension."""

    slight_decel_offset: float = 0.5    # c, m/s2; decelerations above -c are ignored
    emergency_threshold: float = -5.0   # k, m/s2; at or below this, command a stop
    revert_time: float = 20.0           # s, scenario time at which followers revert
    conflict_policy: str = "latest"     # "latest" or "strictest" for concurrent commands

    def __post_init__(self) -> None:
        if self.slight_decel_offset <= 0:
            raise ValueError("slight-deceleration offset must be positive")
        if self.emergency_threshold >= 0:
            raise ValueError("emergency threshold must be negative")
        if self.conflict_policy not in ("latest", "strictest"):
            raise ValueError("conflict policy must be 'latest' or 'strictest'")


def jerk(u_now: float, u_prev: float) -> float:
    """Change in commanded acceleration between consecutive control actions."""
    if not (math.isfinite(u_now) and math.isfinite(u_prev)):
        raise ValueError("jerk inputs must be finite")
    return u_now - u_prev


def jb_alpha(cfg: JbConfig) -> float:
    """Decay coefficient chosen so the interval hits the floor exactly at max_jerk."""
    return -math.log(cfg.min_interval / cfg.max_interval) * cfg.max_jerk ** (-cfg.responsiveness)


def jb_interval(delta_u: float, cfg: JbConfig) -> float:
    """Beacon interval for a given jerk; always within [min_interval, max_interval]."""
    a = jb_alpha(cfg)
    return max(
        math.exp(-a * abs(delta_u) ** cfg.responsiveness) * cfg.max_interval,
        cfg.min_interval,
    )


def jb_schedule_next(delta_u: float, cfg: JbConfig) -> SimTime:
    """Offset in microseconds until the leader's next scheduled beacon."""
    return micros(jb_interval(delta_u, cfg))


# --- reception classification (the slotted chain) ---------------------------


@dataclass(frozen=True)
class ReceptionEffect:
    """What a received same-platoon normal beacon means to one follower."""

    update_leader_view: bool = False
    update_front_view: bool = False
    chain_trigger: bool = False


def jb_on_beacon_received(receiver_index: int, beacon: Beacon) -> ReceptionEffect:
    """Classify a same-platoon normal beacon for a receiver at `receiver_index`.

    The view of the leader updates on index-0 beacons, the view of the front
    vehicle on beacons from index-1's predecessor; a beacon from the immediate
    predecessor also triggers the receiver's own slot in the chain. Special
    beacons never reach this path (followers discard them outright).
    """
    if beacon.beacon_type is not BeaconType.NORMAL:
        return ReceptionEffect()
    if receiver_index == 0:
        return ReceptionEffect()  # leaders hold no views and are timer-driven
    sender = beacon.platoon_index
    is_front = sender == receiver_index - 1
    return ReceptionEffect(
        update_leader_view=sender == 0,
        update_front_view=is_front,
        chain_trigger=is_front,
    )


# --- JBE leader state machine ------------------------------------------------


class LeaderMode(Enum):
    NORMAL = "normal"
    FOLLOWER_DYNAMICS = "follower_dynamics"


@dataclass(frozen=True)
class JbeLeaderState:
    mode: LeaderMode = LeaderMode.NORMAL
    saved_desired_speed: Optional[float] = None
    stop_deceleration: Optional[float] = None  # active emergency command, if any

    def __post_init__(self) -> None:
        if (self.mode is LeaderMode.FOLLOWER_DYNAMICS) != (self.saved_desired_speed is not None):
            raise ValueError("saved speed present iff handling follower dynamics")


class LeaderActionKind(Enum):
    SET_SPEED = "set_speed"
    STOP = "stop"


@dataclass(frozen=True)
class LeaderAction:
    kind: LeaderActionKind
    value: float  # target speed (m/s) or stop deceleration (m/s2, negative)


def jbe_leader_handle(
    beacon: Beacon,
    state: JbeLeaderState,
    own_desired_speed: float,
    policy: str = "latest",
) -> tuple[JbeLeaderState, Optional[LeaderAction]]:
    """Apply one received beacon to the leader's state machine.

    Normal beacons from followers are discarded. The desired speed saved on
    the first special beacon is the one restored by a revert, regardless of
    how many commands arrived in between.
    """
    btype = beacon.beacon_type
    if btype is BeaconType.NORMAL:
        return state, None

    if btype in (BeaconType.EMERGENCY_STOP, BeaconType.SLOW_DOWN) and beacon.command_value is None:
        raise ProtocolViolation(f"{btype.name} beacon without a command value")

    if btype is BeaconType.EMERGENCY_STOP:
        saved = state.saved_desired_speed if state.mode is LeaderMode.FOLLOWER_DYNAMICS else own_desired_speed
        decel = beacon.command_value
        if policy == "strictest" and state.stop_deceleration is not None:
            decel = min(decel, state.stop_deceleration)
        new_state = JbeLeaderState(LeaderMode.FOLLOWER_DYNAMICS, saved, decel)
        return new_state, LeaderAction(LeaderActionKind.STOP, decel)

    if btype is BeaconType.SLOW_DOWN:
        saved = state.saved_desired_speed if state.mode is LeaderMode.FOLLOWER_DYNAMICS else own_desired_speed
        speed = beacon.command_value
        if policy == "strictest":
            if state.stop_deceleration is not None:
                return state, None  # an active stop is stricter than any speed
            speed = min(speed, own_desired_speed)
        new_state = JbeLeaderState(LeaderMode.FOLLOWER_DYNAMICS, saved, None)
        return new_state, LeaderAction(LeaderActionKind.SET_SPEED, speed)

    # revert
    if state.mode is LeaderMode.NORMAL:
        return state, None  # stray revert; nothing to restore
    restored = state.saved_desired_speed
    return JbeLeaderState(), LeaderAction(LeaderActionKind.SET_SPEED, restored)


# --- JBE follower state machine ----------------------------------------------


class FollowerMode(Enum):
    NORMAL = "normal"
    DYNAMICS_ACTIVE = "dynamics_active"


class ActiveDynamics(Enum):
    STOP = "stop"
    SLOW_DOWN = "slow_down"


@dataclass(frozen=True)
class JbeFollowerState:
    mode: FollowerMode = FollowerMode.NORMAL
    active: Optional[ActiveDynamics] = None

    def __post_init__(self) -> None:
        if (self.mode is FollowerMode.DYNAMICS_ACTIVE) != (self.active is not None):
            raise ValueError("active dynamics kind present iff in a dynamics state")


@dataclass(frozen=True)
class SpecialRequest:
    """A special beacon the follower should broadcast immediately."""

    beacon_type: BeaconType
    command_value: Optional[float]


def jbe_follower_monitor(
    own_accel: float,
    leader_accel: float,
    front_accel: float,
    state: JbeFollowerState,
    cfg: JbeConfig,
    target_speed: float,
    end_dynamics: bool = False,
) -> tuple[JbeFollowerState, Optional[SpecialRequest]]:
    """One monitoring step of a follower's own dynamics.

    A deceleration is only announced when neither the leader nor the front
    vehicle is decelerating (otherwise it is a mere reaction to them) and it
    is stronger than the slight-deceleration offset. Acceleration never
    triggers special beacons. Once in a dynamics state the follower stays
    there until it decides to end its dynamics, which emits the revert.
    """
    if state.mode is FollowerMode.DYNAMICS_ACTIVE:
        if end_dynamics:
            return JbeFollowerState(), SpecialRequest(BeaconType.REVERT, None)
        return state, None

    threshold = -cfg.slight_decel_offset
    if leader_accel < threshold or front_accel < threshold:
        return state, None  # reacting to upstream dynamics, not initiating
    if own_accel >= threshold:
        return state, None
    if own_accel <= cfg.emergency_threshold:
        new_state = JbeFollowerState(FollowerMode.DYNAMICS_ACTIVE, ActiveDynamics.STOP)
        return new_state, SpecialRequest(BeaconType.EMERGENCY_STOP, own_accel)
    new_state = JbeFollowerState(FollowerMode.DYNAMICS_ACTIVE, ActiveDynamics.SLOW_DOWN)
    return new_state, SpecialRequest(BeaconType.SLOW_DOWN, target_speed)


def jbe_follower_handle(beacon: Beacon) -> bool:
    """Followers process only normal beacons; specials are discarded."""
    return beacon.beacon_type is BeaconType.NORMAL


# --- acknowledgment tracking for special beacons ------------------------------


class SpecialBeaconTracker:
    """Retransmission bookkeeping for a follower's outstanding special beacon.

    The leader acknowledges by setting the follower's bit in the ack map of
    its own beacons. If no acknowledging leader beacon (transmitted after the
    special) arrives within one max interval of the last attempt, the special
    is retransmitted, up to `retry_limit` retries; then a protocol failure is
    recorded and the attempt abandoned.
    """

    def __init__(self, own_index: int, max_interval: float, retry_limit: int = 5) -> None:
        self.own_index = own_index
        self.timeout_us = micros(max_interval)
        self.retry_limit = retry_limit
        self.outstanding: Optional[tuple[BeaconType, Optional[float]]] = None
        self.first_tx: SimTime = 0
        self.last_tx: SimTime = 0
        self.retries = 0
        self.generation = 0
        self.failures = 0

    def track(self, beacon_type: BeaconType, command_value: Optional[float], now: SimTime) -> int:
        """Start tracking a freshly transmitted special beacon; returns its generation."""
        self.outstanding = (beacon_type, command_value)
        self.first_tx = now
        self.last_tx = now
        self.retries = 0
        self.generation += 1
        return self.generation

    def mark_retransmitted(self, now: SimTime) -> None:
        self.retries += 1
        self.last_tx = now

    def on_leader_beacon(self, ack_map: int, leader_tx_time: SimTime) -> bool:
        """Returns True when the outstanding special beacon got acknowledged."""
        if self.outstanding is None:
            return False
        if leader_tx_time <= self.first_tx:
            return False  # beacon predates the special; cannot acknowledge it
        if not has_ack(ack_map, self.own_index):
            return False
        self.outstanding = None
        return True

    def check_due(self, generation: int, now: SimTime) -> Optional[tuple[BeaconType, Optional[float]]]:
        """Timeout check; returns the frame to retransmit, or None.

        Increments the failure counter and abandons the attempt when the
        retry budget is exhausted.
        """
        if self.outstanding is None or generation != self.generation:
            return None
        if now < self.last_tx + self.timeout_us:
            return None
        if self.retries >= self.retry_limit:
            self.failures += 1
            self.outstanding = None
            return None
        return self.outstanding
