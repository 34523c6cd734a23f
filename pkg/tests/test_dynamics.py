import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jbsim.core import SimulationError, VehicleState
from jbsim.dynamics import ActuationModel, radar_distance, step_vehicle

INSTANT = ActuationModel(lag=1e-9)  # effectively lag-free actuation
DEFAULT = ActuationModel()


def drive(state, command, dt, model, steps):
    for _ in range(steps):
        state = step_vehicle(state, command, dt, model)
    return state


class TestStepVehicle:
    def test_constant_velocity(self):
        s = VehicleState(position=0.0, speed=10.0)
        s = step_vehicle(s, 0.0, 0.01, DEFAULT)
        assert s.position == pytest.approx(0.1)
        assert s.speed == 10.0
        assert s.acceleration == 0.0

    def test_standstill_clamp(self):
        s = VehicleState(position=5.0, speed=0.0)
        s = step_vehicle(s, -2.0, 0.01, DEFAULT)
        assert s.speed == 0.0
        assert s.acceleration == 0.0
        assert s.position == 5.0

    def test_braking_stop_matches_closed_form(self):
        # independent oracle: with lag-free actuation at -6 m/s2 from
        # 27.78 m/s, t_stop = v/|a| and d_stop = v^2 / (2|a|)
        v0 = 27.78
        t_stop = v0 / 6.0            # 4.63 s
        d_stop = v0 * v0 / 12.0      # 64.3107 m
        dt = 0.01
        s = VehicleState(position=0.0, speed=v0)
        steps = 0
        while s.speed > 0.0:
            s = step_vehicle(s, -6.0, dt, INSTANT)
            steps += 1
        assert steps * dt == pytest.approx(t_stop, rel=0.01)
        assert s.position == pytest.approx(d_stop, rel=0.01)

    def test_halving_dt_changes_stopping_distance_below_half_percent(self):
        def stopping_distance(dt):
            s = VehicleState(position=0.0, speed=27.78)
            while s.speed > 0.0:
                s = step_vehicle(s, -6.0, dt, INSTANT)
            return s.position

        d1 = stopping_distance(0.01)
        d2 = stopping_distance(0.005)
        assert abs(d2 - d1) / d1 < 0.005

    def test_command_clamped_to_limits(self):
        s = VehicleState(position=0.0, speed=10.0)
        s = drive(s, 50.0, 0.01, INSTANT, 10)
        assert s.acceleration == pytest.approx(DEFAULT.max_acceleration)

    def test_lag_relaxation_is_first_order(self):
        model = ActuationModel(lag=0.5)
        s = VehicleState(position=0.0, speed=20.0)
        s = drive(s, -2.0, 0.01, model, 50)  # 0.5 s = one time constant
        expected = -2.0 * (1 - math.exp(-1.0))
        assert s.acceleration == pytest.approx(expected, rel=1e-3)

    def test_non_finite_input_is_hard_error(self):
        s = VehicleState(position=0.0, speed=float("nan"))
        with pytest.raises(SimulationError):
            step_vehicle(s, 0.0, 0.01, DEFAULT)
        with pytest.raises(SimulationError):
            step_vehicle(VehicleState(position=0.0, speed=1.0), float("inf"), 0.01, DEFAULT)

    def test_zero_dt_rejected(self):
        with pytest.raises(SimulationError):
            step_vehicle(VehicleState(position=0.0, speed=1.0), 0.0, 0.0, DEFAULT)

    @settings(max_examples=50)
    @given(st.lists(st.floats(min_value=-10.0, max_value=5.0), min_size=1, max_size=200))
    def test_speed_never_negative(self, commands):
        s = VehicleState(position=0.0, speed=5.0)
        for cmd in commands:
            s = step_vehicle(s, cmd, 0.01, DEFAULT)
            assert s.speed >= 0.0

    def test_exact_constant_speed_invariant(self):
        s = VehicleState(position=0.0, speed=27.78)
        s = drive(s, 0.0, 0.01, DEFAULT, 1000)
        assert s.speed == 27.78


class TestActuationModel:
    def test_invariants(self):
        with pytest.raises(ValueError):
            ActuationModel(lag=0.0)
        with pytest.raises(ValueError):
            ActuationModel(max_deceleration=1.0)
        with pytest.raises(ValueError):
            ActuationModel(max_deceleration=-5.0)  # cannot express -6 braking


class TestRadarDistance:
    def test_target_gap(self):
        front = VehicleState(position=100.0, speed=0.0, length=4.0)
        ego = VehicleState(position=91.0, speed=0.0)
        assert radar_distance(ego, front) == pytest.approx(5.0)

    def test_touching_bumpers(self):
        front = VehicleState(position=95.0, speed=0.0, length=4.0)
        ego = VehicleState(position=91.0, speed=0.0)
        assert radar_distance(ego, front) == pytest.approx(0.0)

    def test_overlap_is_negative(self):
        front = VehicleState(position=94.0, speed=0.0, length=4.0)
        ego = VehicleState(position=91.0, speed=0.0)
        assert radar_distance(ego, front) == pytest.approx(-1.0)

    def test_different_lanes_is_caller_bug(self):
        front = VehicleState(position=100.0, speed=0.0, lane=1)
        ego = VehicleState(position=91.0, speed=0.0, lane=0)
        with pytest.raises(SimulationError):
            radar_distance(ego, front)
