"""Shared domain types, simulation clock, and the deterministic event queue.

Simulation time is kept as integer microseconds internally so that event
ordering never depends on float rounding; seconds (floats) are used at the
API edges only.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Optional

# Integer microseconds. All engine-internal timestamps use this unit.
SimTime = int

MICROS_PER_SECOND = 1_000_000


def micros(seconds: float) -> SimTime:
    """Convert seconds to integer microseconds (nearest)."""
    return round(seconds * MICROS_PER_SECOND)


def seconds(time_us: SimTime) -> float:
    """Convert integer microseconds back to seconds."""
    return time_us / MICROS_PER_SECOND


class SimulationError(Exception):
    """An event-loop or model invariant was violated (simulation bug)."""


class EventQueue:
    """Deterministic event queue ordered by (time, insertion sequence).

    Two events scheduled for the same microsecond are drained in the order
    they were scheduled (FIFO tiebreak), which makes whole runs replayable.
    """

    def __init__(self) -> None:
        self._heap: list[tuple[SimTime, int, Callable[[], None]]] = []
        self._seq = 0
        self._now: SimTime = 0

    @property
    def now(self) -> SimTime:
        return self._now

    def schedule(self, time_us: SimTime, action: Callable[[], None]) -> None:
        """Schedule `action` at `time_us`. Scheduling in the past is a bug."""
        if time_us < self._now:
            raise SimulationError(
                f"event scheduled in the past: t={time_us} < clock={self._now}"
            )
        heapq.heappush(self._heap, (time_us, self._seq, action))
        self._seq += 1

    def schedule_in(self, delay_us: SimTime, action: Callable[[], None]) -> None:
        self.schedule(self._now + delay_us, action)

    def __len__(self) -> int:
        return len(self._heap)

    def pop(self) -> tuple[SimTime, Callable[[], None]]:
        """Remove and return the next (time, action) pair, advancing the clock."""
        time_us, _seq, action = heapq.heappop(self._heap)
        self._now = time_us
        return time_us, action

    def run_until(self, end_us: SimTime) -> None:
        """Drain events with time <= end_us, then set the clock to end_us."""
        while self._heap and self._heap[0][0] <= end_us:
            _t, action = self.pop()
            action()
        self._now = end_us


class BeaconType(IntEnum):
    """Over-the-air message types; numeric codes are preserved in traces."""

    NORMAL = -1          # periodic kinematic update
    EMERGENCY_STOP = 0   # follower commands the leader to brake to a stop
    SLOW_DOWN = 1        # follower commands the leader to a new target speed
    REVERT = 2           # follower releases the leader back to its saved state


#: Beacon types that carry a command payload.
SPECIAL_TYPES = (BeaconType.EMERGENCY_STOP, BeaconType.SLOW_DOWN, BeaconType.REVERT)


@dataclass
class VehicleState:
    """Kinematic plus actuation state of one vehicle.

    `position` is the front bumper along the lane. `acceleration` is the
    actual value after actuation lag; `commanded_acceleration` is the
    controller output currently being tracked.
    """

    position: float
    speed: float
    acceleration: float = 0.0
    commanded_acceleration: float = 0.0
    lane: int = 0
    length: float = 4.0


@dataclass
class Beacon:
    """One broadcast message: sender identity, type, kinematics, command."""

    sender: int
    platoon: int
    platoon_index: int
    beacon_type: BeaconType
    position: float
    speed: float
    acceleration: float
    command_value: Optional[float] = None
    ack_map: int = 0
    timestamp: SimTime = 0
    size: int = 200

    def __post_init__(self) -> None:
        needs_value = self.beacon_type in (BeaconType.EMERGENCY_STOP, BeaconType.SLOW_DOWN)
        if needs_value and self.command_value is None:
            raise ValueError(f"{self.beacon_type.name} beacon requires a command value")
        if not needs_value and self.command_value is not None:
            raise ValueError(f"{self.beacon_type.name} beacon must not carry a command value")
        if self.beacon_type is BeaconType.EMERGENCY_STOP and self.command_value >= 0:
            raise ValueError("stop command must be a negative deceleration")
        if self.beacon_type is BeaconType.SLOW_DOWN and self.command_value < 0:
            raise ValueError("slow-down command must be a non-negative speed")
        if self.size <= 0:
            raise ValueError("beacon size must be positive")


def ack_bit(platoon_index: int) -> int:
    return 1 << platoon_index


def has_ack(ack_map: int, platoon_index: int) -> bool:
    return bool(ack_map & (1 << platoon_index))
