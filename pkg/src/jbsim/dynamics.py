"""Longitudinal vehicle dynamics: actuation lag, limits, integration, radar.

All functions are pure; the engine owns the mutation. Integration is
semi-implicit Euler (speed first, then position with the new speed), which
is stable for hard braking at the default 0.01 s tick.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .core import SimulationError, VehicleState


@dataclass(frozen=True)
class ActuationModel:
    """First-order lag between commanded and actual acceleration.

    `max_deceleration` must admit the -6 m/s2 emergency braking maneuver.
    """

    lag: float = 0.5                 # s, time constant of the engine/brake response
    max_acceleration: float = 3.0    # m/s2
    max_deceleration: float = -8.0   # m/s2 (negative)

    def __post_init__(self) -> None:
        if self.lag <= 0:
            raise ValueError("actuation lag must be positive")
        if not self.max_deceleration < 0 < self.max_acceleration:
            raise ValueError("acceleration limits must straddle zero")
        if self.max_deceleration > -6.0:
            raise ValueError("max deceleration must be at most -6 m/s2")

    def clamp(self, command: float) -> float:
        return min(self.max_acceleration, max(self.max_deceleration, command))


def step_vehicle(
    state: VehicleState, commanded: float, dt: float, model: ActuationModel
) -> VehicleState:
    """Advance one vehicle by `dt` toward the clamped commanded acceleration.

    The actual acceleration relaxes toward the command with the model's lag.
    Speed is clamped at zero: a standing vehicle with a non-positive command
    stays at rest with zero acceleration.
    """
    if dt <= 0:
        raise SimulationError("dt must be positive")
    if not all(math.isfinite(v) for v in (state.position, state.speed, state.acceleration, commanded)):
        raise SimulationError("non-finite vehicle state or command")

    target = model.clamp(commanded)
    # exact first-order relaxation over dt (robust for dt ~ lag)
    decay = math.exp(-dt / model.lag)
    accel = target + (state.acceleration - target) * decay

    speed = state.speed + accel * dt
    if speed <= 0.0:
        # standstill: no reversing; a stopped vehicle with a non-positive
        # command reports zero acceleration
        speed = 0.0
        if target <= 0.0:
            accel = 0.0
    position = state.position + speed * dt

    return replace(
        state,
        position=position,
        speed=speed,
        acceleration=accel,
        commanded_acceleration=commanded,
    )


def radar_distance(ego: VehicleState, front: VehicleState) -> float:
    """Bumper-to-bumper gap to the vehicle ahead; <= 0 signals a crash."""
    if ego.lane != front.lane:
        raise SimulationError("radar target must be in the same lane")
    return front.position - front.length - ego.position
