"""Longitudinal controllers and stale-state estimation.

Followers run the PATH CACC law on radar distance plus V2V views of the
leader and the directly preceding vehicle; leaders run a proportional
cruise law. Views received over the air are dead-reckoned forward to the
evaluation instant.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .core import SimTime, SimulationError, VehicleState, seconds


@dataclass(frozen=True)
class CaccGains:
    """Gain set for the PATH CACC law plus the desired bumper gap.

    Defaults follow the standard PATH demonstration parameterization
    (C1 = 0.5, omega_n = 0.2, xi = 1):
        alpha1 = 1 - C1, alpha2 = C1, alpha3 = -omega_n^2,
        alpha4 = -xi * omega_n * C1, alpha5 = -(2*xi - C1*(xi)) * omega_n.
    """

    alpha1: float = 0.5     # weight of the front vehicle's acceleration
    alpha2: float = 0.5     # weight of the leader's acceleration
    alpha3: float = -0.04   # gap-error gain, acts on (d_d - d_radar)
    alpha4: float = -0.1    # speed-error gain vs. the leader
    alpha5: float = -0.3    # speed-error gain vs. the front vehicle
    desired_gap: float = 5.0  # m, bumper-to-bumper

    def __post_init__(self) -> None:
        if self.desired_gap <= 0:
            raise ValueError("desired gap must be positive")


@dataclass(frozen=True)
class RemoteVehicleView:
    """Last state received from a remote vehicle, with its receive time."""

    position: float
    speed: float
    acceleration: float
    received_at: SimTime


def path_cacc(
    ego: VehicleState,
    front: RemoteVehicleView,
    leader: RemoteVehicleView,
    d_radar: float,
    gains: CaccGains,
) -> float:
    """PATH CACC commanded acceleration.

    u = a1*u_front + a2*u_leader + a3*(d_d - d_radar)
        + a4*(v_ego - v_leader) + a5*(v_ego - v_front)

    No clamping is applied here; the dynamics module owns physical limits.
    """
    if front is None or leader is None:
        raise SimulationError("CACC requires views of both the front vehicle and the leader")
    return (
        gains.alpha1 * front.acceleration
        + gains.alpha2 * leader.acceleration
        + gains.alpha3 * (-d_radar + gains.desired_gap)
        + gains.alpha4 * (ego.speed - leader.speed)
        + gains.alpha5 * (ego.speed - front.speed)
    )


def leader_cruise(current: float, target: float, gain: float) -> float:
    """Proportional speed controller for platoon leaders.

    With the default gain 0.5 and the default 0.5 s actuation lag the closed
    loop is critically damped, so speed steps settle without overshoot.
    """
    if gain <= 0:
        raise ValueError("cruise gain must be positive")
    return gain * (target - current)


def dead_reckon(view: RemoteVehicleView, now: SimTime) -> RemoteVehicleView:
    """Extrapolate a received view forward to `now` at constant acceleration.

    Speed is clamped at zero (remote vehicles do not reverse); position uses
    the exact kinematic form up to the clamp instant.
    """
    dt = seconds(now - view.received_at)
    if dt == 0.0:
        return view
    if view.acceleration < 0.0 and view.speed + view.acceleration * dt < 0.0:
        # remote vehicle reaches standstill within dt
        t_stop = view.speed / -view.acceleration
        position = view.position + view.speed * t_stop + 0.5 * view.acceleration * t_stop * t_stop
        return replace(view, position=position, speed=0.0, received_at=now)
    position = view.position + view.speed * dt + 0.5 * view.acceleration * dt * dt
    speed = view.speed + view.acceleration * dt
    return replace(view, position=position, speed=speed, received_at=now)
