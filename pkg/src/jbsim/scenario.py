"""World construction, experiment injection, and run orchestration.

One run is a single-threaded event loop: a fixed-step dynamics tick advances
all vehicles and evaluates controllers and the JBE monitors, while beacon
transmissions, chain slots, deliveries, fallback timers, and retransmission
checks are scheduled as microsecond-precision events in between.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

from .beaconing import (
    ActiveDynamics,
    FollowerMode,
    JbeFollowerState,
    JbeLeaderState,
    LeaderActionKind,
    ProtocolViolation,
    SpecialBeaconTracker,
    SpecialRequest,
    jb_on_beacon_received,
    jb_schedule_next,
    jbe_follower_handle,
    jbe_follower_monitor,
    jbe_leader_handle,
)
from .channel import Channel
from .config import ConfigError, SimulationSettings
from .controllers import RemoteVehicleView, dead_reckon, leader_cruise, path_cacc
from .core import (
    Beacon,
    BeaconType,
    EventQueue,
    SimTime,
    SimulationError,
    VehicleState,
    has_ack,
    micros,
    seconds,
)
from .dynamics import radar_distance, step_vehicle
from .metrics import RunMetrics, aggregate_cbr


class ExperimentKind(Enum):
    FOLLOWER_SLOWDOWN = "slowdown"
    FOLLOWER_STOPPING = "stopping"
    STRING_STABILITY = "stability"


@dataclass
class Maneuver:
    """A scripted longitudinal maneuver of one follower."""

    kind: str            # "slowdown" or "stop"
    rate: float          # m/s2, negative
    target_speed: float  # m/s; 0 for a stop
    start_us: SimTime
    end_us: SimTime

    def active(self, now: SimTime) -> bool:
        return self.start_us <= now < self.end_us


class SimVehicle:
    """One vehicle's full per-run state: kinematics, views, protocol."""

    def __init__(
        self,
        vid: int,
        platoon: int,
        index: int,
        lane: int,
        state: VehicleState,
        desired_speed: float,
    ) -> None:
        self.id = vid
        self.platoon = platoon
        self.index = index
        self.lane = lane
        self.state = state
        self.is_leader = index == 0
        self.desired_speed = desired_speed
        self.leader_view: Optional[RemoteVehicleView] = None
        self.front_view: Optional[RemoteVehicleView] = None
        # beaconing bookkeeping
        self.last_eff = 0.0      # effective commanded acceleration of the last tick
        self.delta_u = 0.0       # jerk between the last two control actions
        self.last_tx_us: Optional[SimTime] = None
        self.next_due_us: SimTime = 0  # leaders only
        self.pending_normal = False
        self.heard: set[int] = set()   # platoon indices heard since the last own tx
        self.beacons_confirmed = 0     # own beacons seen in others' ack maps
        # JBE state machines
        self.jbe_leader = JbeLeaderState()
        self.jbe_follower = JbeFollowerState()
        self.tracker: Optional[SpecialBeaconTracker] = None
        # scenario
        self.maneuver: Optional[Maneuver] = None
        self.frozen = False


def build_highway(settings: SimulationSettings) -> list[SimVehicle]:
    """Place all platoons: intra-platoon bumper gaps, headway-scaled gaps
    between platoons, every vehicle at the initial speed."""
    sc = settings.scenario
    spacing = sc.vehicle_length + sc.intra_gap
    platoon_extent = sc.platoon_size * sc.vehicle_length + (sc.platoon_size - 1) * sc.intra_gap
    inter_gap = sc.time_headway * sc.initial_speed
    lane_extent = sc.platoons_per_lane * platoon_extent + (sc.platoons_per_lane - 1) * inter_gap

    vehicles = []
    vid = 0
    for lane in range(sc.lanes):
        for p in range(sc.platoons_per_lane):
            platoon_id = lane * sc.platoons_per_lane + p
            front = lane_extent - p * (platoon_extent + inter_gap)
            for i in range(sc.platoon_size):
                state = VehicleState(
                    position=front - i * spacing,
                    speed=sc.initial_speed,
                    lane=lane,
                    length=sc.vehicle_length,
                )
                vehicles.append(SimVehicle(vid, platoon_id, i, lane, state, sc.initial_speed))
                vid += 1
    return vehicles


def _lane0_first_followers(world: list[SimVehicle]) -> list[SimVehicle]:
    return [v for v in world if v.lane == 0 and v.index == 1]


def inject_follower_slowdown(
    world: list[SimVehicle], start: float, revert: float, rate: float, target_speed: float
) -> list[SimVehicle]:
    """The first follower of every lane-0 platoon decelerates to the target
    speed at `start` and ends its dynamics at `revert`."""
    chosen = _lane0_first_followers(world)
    for v in chosen:
        v.maneuver = Maneuver("slowdown", rate, target_speed, micros(start), micros(revert))
    return chosen


def inject_follower_stopping(
    world: list[SimVehicle], start: float, revert: float, rate: float
) -> list[SimVehicle]:
    """The first follower of every lane-0 platoon brakes to a standstill at
    `start` and ends its dynamics at `revert`."""
    chosen = _lane0_first_followers(world)
    for v in chosen:
        v.maneuver = Maneuver("stop", rate, 0.0, micros(start), micros(revert))
    return chosen


def inject_string_stability(
    world: list[SimVehicle], first: float, second: float, rate: float
) -> list[SimVehicle]:
    """Disturbance pair on a single 8-vehicle platoon: follower 1 brakes to a
    stop at `first`; ending its dynamics at `second` makes the leader initiate
    the acceleration back."""
    platoons = {v.platoon for v in world}
    if len(platoons) != 1 or len(world) != 8:
        raise ConfigError("the string-stability experiment needs exactly one platoon of 8 vehicles")
    return inject_follower_stopping(world, first, second, rate)


class Simulation:
    """A single deterministic run of one scheme on one scenario."""

    def __init__(
        self,
        settings: SimulationSettings,
        scheme: str,
        experiment: Optional[ExperimentKind] = None,
        loss_hook=None,
        keep_channel_trace: bool = False,
    ) -> None:
        if scheme not in ("jb", "jbe"):
            raise ConfigError(f"unknown scheme {scheme!r} (choose jb or jbe)")
        sc = settings.scenario
        if experiment is not None:
            start, revert = settings.experiment.start_time, settings.jbe.revert_time
            if not start < revert < sc.duration:
                raise ConfigError(
                    f"need experiment start ({start}) < revert ({revert}) < duration ({sc.duration})"
                )

        self.settings = settings
        self.scheme = scheme
        self.experiment = experiment
        self.queue = EventQueue()
        self.rng = random.Random(sc.seed)

        self.vehicles = build_highway(settings)
        self.by_id = {v.id: v for v in self.vehicles}
        self.platoons: dict[int, list[SimVehicle]] = {}
        for v in self.vehicles:
            self.platoons.setdefault(v.platoon, []).append(v)

        if experiment is ExperimentKind.FOLLOWER_SLOWDOWN:
            inject_follower_slowdown(
                self.vehicles,
                settings.experiment.start_time,
                settings.jbe.revert_time,
                settings.experiment.slowdown_rate,
                settings.experiment.slowdown_speed,
            )
        elif experiment is ExperimentKind.FOLLOWER_STOPPING:
            inject_follower_stopping(
                self.vehicles,
                settings.experiment.start_time,
                settings.jbe.revert_time,
                settings.experiment.stop_rate,
            )
        elif experiment is ExperimentKind.STRING_STABILITY:
            inject_string_stability(
                self.vehicles,
                settings.experiment.start_time,
                settings.jbe.revert_time,
                settings.experiment.stop_rate,
            )

        if scheme == "jbe":
            for v in self.vehicles:
                if not v.is_leader:
                    v.tracker = SpecialBeaconTracker(
                        v.index, settings.jb.max_interval, settings.retry_limit
                    )

        self.channel = Channel(
            settings.channel,
            self.queue,
            self.rng,
            stations=[v.id for v in self.vehicles],
            position_of=lambda vid: self.by_id[vid].state.position,
            on_delivery=self._on_delivery,
            backoff_window_us=max(1, micros(settings.backoff_window)),
            loss_hook=loss_hook,
            keep_trace=keep_channel_trace,
        )

        self.dt_us = micros(sc.dt)
        self.duration_us = micros(sc.duration)
        self.max_bi_us = micros(settings.jb.max_interval)
        self.slot_us = micros(settings.slot_offset)

        self.metrics = RunMetrics(
            scheme=scheme,
            scenario=experiment.value if experiment else "steady",
            seed=sc.seed,
            duration=sc.duration,
        )
        self.metrics.vehicle_info = {v.id: (v.platoon, v.index, v.lane) for v in self.vehicles}
        for v in self.vehicles:
            self.metrics.speed_traces[v.id] = []

        # stagger the first leader beacons so platoon chains do not align
        for v in self.vehicles:
            if v.is_leader:
                v.next_due_us = self.rng.randrange(self.max_bi_us)

    # -- control & dynamics ----------------------------------------------------

    def _compute_command(self, v: SimVehicle, now: SimTime) -> float:
        if v.frozen:
            return 0.0
        if v.is_leader:
            if v.jbe_leader.stop_deceleration is not None:
                return v.jbe_leader.stop_deceleration
            return leader_cruise(v.state.speed, v.desired_speed, self.settings.cruise_gain)
        m = v.maneuver
        if m is not None and m.active(now):
            if m.kind == "stop":
                return m.rate
            if v.state.speed > m.target_speed + 0.05:
                return m.rate
            return leader_cruise(v.state.speed, m.target_speed, self.settings.cruise_gain)
        if v.front_view is not None and v.leader_view is not None:
            front_vehicle = self.platoons[v.platoon][v.index - 1]
            d_radar = radar_distance(v.state, front_vehicle.state)
            return path_cacc(
                v.state,
                dead_reckon(v.front_view, now),
                dead_reckon(v.leader_view, now),
                d_radar,
                self.settings.cacc,
            )
        return 0.0  # hold speed until the first beacons arrive

    def _effective_accel(self, v: SimVehicle, command: float) -> float:
        """The acceleration the vehicle is executing at the control level:
        the clamped command, zeroed at standstill."""
        target = self.settings.actuation.clamp(command)
        if v.state.speed == 0.0 and target <= 0.0:
            return 0.0
        return target

    def _tick(self) -> None:
        now = self.queue.now
        sc = self.settings.scenario

        commands = [self._compute_command(v, now) for v in self.vehicles]
        for v, cmd in zip(self.vehicles, commands):
            if v.frozen:
                continue
            v.state = step_vehicle(v.state, cmd, sc.dt, self.settings.actuation)
            eff = self._effective_accel(v, cmd)
            v.delta_u = eff - v.last_eff
            v.last_eff = eff

        for v in self.vehicles:
            if v.is_leader:
                self._leader_beacon_logic(v, now)
            elif self.scheme == "jbe" and not v.frozen:
                self._follower_monitor(v, now)

        self._sample(now)
        if now + self.dt_us <= self.duration_us:
            self.queue.schedule(now + self.dt_us, self._tick)

    # -- beaconing glue ----------------------------------------------------------

    def _leader_beacon_logic(self, v: SimVehicle, now: SimTime) -> None:
        if v.last_tx_us is not None:
            # the pending beacon may move earlier when the jerk spikes,
            # never later than already scheduled
            due = v.last_tx_us + jb_schedule_next(v.delta_u, self.settings.jb)
            v.next_due_us = min(v.next_due_us, due)
        if now >= v.next_due_us:
            self._request_normal(v)

    def _follower_monitor(self, v: SimVehicle, now: SimTime) -> None:
        end_dynamics = (
            v.jbe_follower.mode is FollowerMode.DYNAMICS_ACTIVE
            and v.maneuver is not None
            and now >= v.maneuver.end_us
        )
        leader_accel = v.leader_view.acceleration if v.leader_view else 0.0
        front_accel = v.front_view.acceleration if v.front_view else 0.0
        if v.maneuver is not None and v.maneuver.active(now):
            target_speed = v.maneuver.target_speed
        else:
            target_speed = v.state.speed
        state, request = jbe_follower_monitor(
            v.last_eff,
            leader_accel,
            front_accel,
            v.jbe_follower,
            self.settings.jbe,
            target_speed,
            end_dynamics,
        )
        v.jbe_follower = state
        if request is not None:
            self._send_special(v, request, retransmit=False)

    def _build_normal_beacon(self, v: SimVehicle) -> Beacon:
        now = self.queue.now
        command = self._compute_command(v, now)
        return Beacon(
            sender=v.id,
            platoon=v.platoon,
            platoon_index=v.index,
            beacon_type=BeaconType.NORMAL,
            position=v.state.position,
            speed=v.state.speed,
            acceleration=self._effective_accel(v, command),
            ack_map=self._ack_map(v),
            timestamp=now,
        )

    def _ack_map(self, v: SimVehicle) -> int:
        bits = 0
        for index in v.heard:
            bits |= 1 << index
        return bits

    def _request_normal(self, v: SimVehicle, delay_us: SimTime = 0) -> None:
        if v.pending_normal:
            return
        v.pending_normal = True
        if delay_us > 0:
            self.queue.schedule_in(delay_us, lambda: self._submit_normal(v))
        else:
            self._submit_normal(v)

    def _submit_normal(self, v: SimVehicle) -> None:
        def on_started(start: SimTime) -> None:
            v.pending_normal = False
            v.last_tx_us = start
            v.heard.clear()
            if v.is_leader:
                v.next_due_us = start + jb_schedule_next(v.delta_u, self.settings.jb)
            else:
                self._arm_fallback(v, start)

        self.channel.request(v.id, lambda: self._build_normal_beacon(v), on_started)

    def _arm_fallback(self, v: SimVehicle, snapshot: SimTime) -> None:
        """Chain-loss insurance: transmit anyway if nothing went out for one
        max interval after this vehicle's last transmission."""

        def check() -> None:
            if v.last_tx_us == snapshot and not v.pending_normal:
                self._request_normal(v)

        self.queue.schedule(snapshot + self.max_bi_us, check)

    def _send_special(self, v: SimVehicle, request: SpecialRequest, retransmit: bool) -> None:
        def build() -> Beacon:
            return Beacon(
                sender=v.id,
                platoon=v.platoon,
                platoon_index=v.index,
                beacon_type=request.beacon_type,
                position=v.state.position,
                speed=v.state.speed,
                acceleration=v.last_eff,
                command_value=request.command_value,
                ack_map=self._ack_map(v),
                timestamp=self.queue.now,
            )

        def on_started(start: SimTime) -> None:
            v.last_tx_us = start
            v.heard.clear()
            self._arm_fallback(v, start)
            tracker = v.tracker
            if retransmit:
                tracker.mark_retransmitted(start)
                generation = tracker.generation
            else:
                generation = tracker.track(request.beacon_type, request.command_value, start)
            self.metrics.special_beacons.append(
                (seconds(start), v.id, int(request.beacon_type), request.command_value)
            )
            self.queue.schedule(start + self.max_bi_us, lambda: self._check_retransmission(v, generation))

        self.channel.request(v.id, build, on_started)

    def _check_retransmission(self, v: SimVehicle, generation: int) -> None:
        frame = v.tracker.check_due(generation, self.queue.now)
        if frame is not None:
            self._send_special(v, SpecialRequest(*frame), retransmit=True)

    # -- reception ----------------------------------------------------------------

    def _on_delivery(self, receiver_id: int, beacon: Beacon) -> None:
        r = self.by_id[receiver_id]
        if r.platoon != beacon.platoon:
            return  # other platoons only contribute channel load
        if r.is_leader:
            self._leader_receive(r, beacon)
        else:
            self._follower_receive(r, beacon)

    def _leader_receive(self, r: SimVehicle, beacon: Beacon) -> None:
        if beacon.beacon_type is BeaconType.NORMAL:
            # leaders discard follower status updates; only the piggybacked
            # delivery confirmation is of interest. Discarded frames are not
            # acknowledged, so a leader ack bit always refers to a special
            # beacon and retransmission tracking stays sound.
            if has_ack(beacon.ack_map, 0):
                r.beacons_confirmed += 1
            return
        r.heard.add(beacon.platoon_index)
        if self.scheme != "jbe":
            return
        try:
            state, action = jbe_leader_handle(
                beacon, r.jbe_leader, r.desired_speed, self.settings.jbe.conflict_policy
            )
        except ProtocolViolation:
            self.metrics.malformed_beacons += 1
            return
        r.jbe_leader = state
        if action is not None and action.kind is LeaderActionKind.SET_SPEED:
            r.desired_speed = action.value

    def _follower_receive(self, r: SimVehicle, beacon: Beacon) -> None:
        if not jbe_follower_handle(beacon):
            return  # followers never react to other followers' dynamics
        r.heard.add(beacon.platoon_index)
        now = self.queue.now
        effect = jb_on_beacon_received(r.index, beacon)
        view = RemoteVehicleView(beacon.position, beacon.speed, beacon.acceleration, now)
        if effect.update_leader_view:
            r.leader_view = view
            if r.tracker is not None:
                r.tracker.on_leader_beacon(beacon.ack_map, beacon.timestamp)
        if effect.update_front_view:
            r.front_view = view
        if effect.chain_trigger:
            self._request_normal(r, delay_us=self.slot_us)

    # -- measurement ----------------------------------------------------------------

    def _freeze(self, v: SimVehicle) -> None:
        if v.frozen:
            return
        v.frozen = True
        v.state = replace(v.state, speed=0.0, acceleration=0.0, commanded_acceleration=0.0)
        v.last_eff = 0.0
        v.delta_u = 0.0
        v.maneuver = None

    def _sample(self, now: SimTime) -> None:
        t = seconds(now)
        m = self.metrics
        m.sample_times.append(t)

        for members in self.platoons.values():
            for i in range(1, len(members)):
                rear, front = members[i], members[i - 1]
                gap = radar_distance(rear.state, front.state)
                m.gap_samples.append((t, rear.id, front.id, gap))
                if gap < m.global_min_distance:
                    m.global_min_distance = gap
                if gap <= 0.0 and not (rear.frozen and front.frozen):
                    if not m.crash:
                        m.crash = True
                        m.crash_time = t
                        m.crash_pair = (rear.id, front.id)
                    self._freeze(rear)
                    self._freeze(front)

        # traces are recorded after crash handling so frozen vehicles read 0
        for v in self.vehicles:
            m.speed_traces[v.id].append(v.state.speed)

        sc = self.settings.scenario
        for lane in range(sc.lanes):
            for p in range(1, sc.platoons_per_lane):
                front_platoon = self.platoons[lane * sc.platoons_per_lane + p - 1]
                rear_platoon = self.platoons[lane * sc.platoons_per_lane + p]
                gap = radar_distance(rear_platoon[0].state, front_platoon[-1].state)
                if gap < m.inter_platoon_min:
                    m.inter_platoon_min = gap

    # -- orchestration ----------------------------------------------------------------

    def run(self) -> RunMetrics:
        self._sample(0)
        self.queue.schedule(self.dt_us, self._tick)
        self.queue.run_until(self.duration_us)
        self.channel.finalize()

        m = self.metrics
        m.cbr_series, m.avg_cbr = aggregate_cbr(self.channel.ledgers, self.settings.scenario.duration)
        m.protocol_failures = sum(v.tracker.failures for v in self.vehicles if v.tracker is not None)
        m.tx_count = len(self.channel.tx_log)
        for tx in self.channel.tx_log:
            m.delivered_count += tx.delivered
            m.lost_count += tx.lost
            b = tx.beacon
            payload = b.command_value if b.command_value is not None else b.speed
            outcome = "delivered" if tx.delivered > 0 else "lost"
            m.beacon_rows.append(
                (seconds(tx.start), tx.transmitter, int(b.beacon_type), payload, outcome)
            )
        return m


def run_simulation(
    settings: SimulationSettings,
    scheme: str,
    experiment: Optional[ExperimentKind],
    loss_hook=None,
    keep_channel_trace: bool = False,
) -> RunMetrics:
    """Build and run one scenario; the string-stability experiment reshapes
    the world to its single 8-vehicle platoon."""
    if experiment is ExperimentKind.STRING_STABILITY:
        settings = replace(
            settings,
            scenario=replace(settings.scenario, lanes=1, platoons_per_lane=1, platoon_size=8),
        )
    sim = Simulation(
        settings,
        scheme,
        experiment,
        loss_hook=loss_hook,
        keep_channel_trace=keep_channel_trace,
    )
    return sim.run()
