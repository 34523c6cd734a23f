"""Simplified broadcast medium: deterministic disc range, airtime from the
bitrate, destructive collisions on temporal overlap at a receiver, and
per-observer busy-time accounting for the channel busy ratio.

Every station within range of a transmission senses it for the whole frame
duration; a frame is delivered only if no other in-range transmission
overlaps it at that receiver. The transmitter senses its own frame, which
also makes reception impossible while transmitting (half duplex).
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .core import Beacon, EventQueue, SimTime, SimulationError, micros

WINDOW_US = 1_000_000  # CBR window length T = 1 s


@dataclass(frozen=True)
class ChannelConfig:
    bitrate: float = 6e6          # bit/s
    frame_overhead: float = 100e-6  # s per frame (preamble, headers, spacing)
    comm_range: float = 500.0     # m, deterministic disc radius
    tx_power_mw: float = 100.0    # informational; range is the operative knob

    def __post_init__(self) -> None:
        if self.bitrate <= 0:
            raise ValueError("bitrate must be positive")
        if self.comm_range <= 0:
            raise ValueError("communication range must be positive")
        if self.frame_overhead < 0:
            raise ValueError("frame overhead cannot be negative")


def airtime(size_bytes: int, cfg: ChannelConfig) -> float:
    """Frame duration in seconds: payload bits over bitrate plus overhead."""
    if size_bytes <= 0:
        raise ValueError("frame size must be positive")
    return 8.0 * size_bytes / cfg.bitrate + cfg.frame_overhead


def carrier_sense_defer(
    start: SimTime,
    busy_until: SimTime,
    rng: random.Random,
    backoff_window_us: int = 256,
) -> SimTime:
    """Adjusted start time: unchanged when idle, else end-of-busy plus a
    uniform random backoff from [0, backoff_window_us)."""
    if busy_until <= start:
        return start
    return busy_until + rng.randrange(backoff_window_us)


class BusyLedger:
    """Merged busy intervals of one observer, folded into fixed 1 s windows.

    Intervals must be added in non-decreasing start order (the event loop
    guarantees this); overlapping or adjacent intervals merge, so each
    window accumulates the union of the busy time within it.
    """

    def __init__(self) -> None:
        self._tail_start: Optional[SimTime] = None
        self._tail_end: SimTime = 0
        self._window_busy_us: dict[int, int] = {}
        self._finalized = False

    def add(self, start: SimTime, end: SimTime) -> None:
        if end <= start:
            raise ValueError("busy interval must have positive length")
        if self._tail_start is None:
            self._tail_start, self._tail_end = start, end
            return
        if start < self._tail_start:
            raise SimulationError("busy intervals must arrive in start order")
        if start <= self._tail_end:
            self._tail_end = max(self._tail_end, end)
        else:
            self._flush_tail()
            self._tail_start, self._tail_end = start, end

    def _flush_tail(self) -> None:
        if self._tail_start is None:
            return
        start, end = self._tail_start, self._tail_end
        for window in range(start // WINDOW_US, (end - 1) // WINDOW_US + 1):
            lo = max(start, window * WINDOW_US)
            hi = min(end, (window + 1) * WINDOW_US)
            if hi > lo:
                self._window_busy_us[window] = self._window_busy_us.get(window, 0) + (hi - lo)
        self._tail_start = None

    def finalize(self) -> None:
        self._flush_tail()
        self._finalized = True

    def busy_in_window(self, window: int) -> int:
        """Merged busy microseconds inside window [window, window+1) seconds."""
        if not self._finalized:
            self._flush_tail()
            self._finalized = True
        return self._window_busy_us.get(window, 0)

    def cbr(self, window: int, now: SimTime) -> float:
        """Busy fraction of a fully elapsed window; in [0, 1]."""
        if (window + 1) * WINDOW_US > now:
            raise SimulationError(f"CBR window {window} has not fully elapsed")
        return self.busy_in_window(window) / WINDOW_US


@dataclass
class Transmission:
    """One on-air frame, with its frozen audience and delivery outcome."""

    transmitter: int
    position: float
    start: SimTime
    end: SimTime
    beacon: Beacon
    audience: tuple[int, ...]  # stations in range at start, transmitter included
    audience_set: frozenset[int] = field(default_factory=frozenset)
    delivered: int = 0
    lost: int = 0


class Channel:
    """Event-driven broadcast medium shared by all stations of a run."""

    def __init__(
        self,
        cfg: ChannelConfig,
        queue: EventQueue,
        rng: random.Random,
        stations: list[int],
        position_of: Callable[[int], float],
        on_delivery: Callable[[int, Beacon], None],
        backoff_window_us: int = 256,
        loss_hook: Optional[Callable[[Transmission, int], bool]] = None,
        keep_trace: bool = False,
    ) -> None:
        self.cfg = cfg
        self.queue = queue
        self.rng = rng
        self.stations = list(stations)
        self.position_of = position_of
        self.on_delivery = on_delivery
        self.backoff_window_us = backoff_window_us
        self.loss_hook = loss_hook
        self.ledgers: dict[int, BusyLedger] = {vid: BusyLedger() for vid in self.stations}
        self.tx_log: list[Transmission] = []
        self.trace: Optional[list[tuple[SimTime, int, int, str]]] = [] if keep_trace else None
        self._recent: deque[Transmission] = deque()
        self._active_by_station: dict[int, Transmission] = {}
        self._max_airtime_us = 1

    # -- sensing -------------------------------------------------------------

    def _in_range(self, pos_a: float, pos_b: float) -> bool:
        return abs(pos_a - pos_b) <= self.cfg.comm_range

    def sensed_busy_until(self, station: int, at: SimTime) -> SimTime:
        """Latest end among transmissions currently audible at `station`."""
        pos = self.position_of(station)
        busy_until = at
        for tx in self._recent:
            if tx.start <= at < tx.end and self._in_range(pos, tx.position):
                busy_until = max(busy_until, tx.end)
        return busy_until

    # -- transmission paths ----------------------------------------------------

    def request(
        self,
        station: int,
        build_beacon: Callable[[], Beacon],
        on_started: Optional[Callable[[SimTime], None]] = None,
    ) -> None:
        """Carrier-sense transmit: start now if idle, else defer and retry."""
        now = self.queue.now
        busy_until = self.sensed_busy_until(station, now)
        if busy_until <= now:
            self.broadcast(station, build_beacon(), on_started)
            return
        retry_at = carrier_sense_defer(now, busy_until, self.rng, self.backoff_window_us)
        self.queue.schedule(retry_at, lambda: self.request(station, build_beacon, on_started))

    def broadcast(
        self,
        station: int,
        beacon: Beacon,
        on_started: Optional[Callable[[SimTime], None]] = None,
    ) -> Transmission:
        """Put a frame on the air unconditionally (no carrier sensing)."""
        now = self.queue.now
        active = self._active_by_station.get(station)
        if active is not None and active.end > now:
            raise SimulationError(f"station {station} is already transmitting (half duplex)")

        air_us = max(1, micros(airtime(beacon.size, self.cfg)))
        self._max_airtime_us = max(self._max_airtime_us, air_us)
        pos = self.position_of(station)
        audience = tuple(
            vid for vid in self.stations if self._in_range(pos, self.position_of(vid))
        )
        tx = Transmission(station, pos, now, now + air_us, beacon, audience, frozenset(audience))

        self._prune(now)
        self._recent.append(tx)
        self._active_by_station[station] = tx
        self.tx_log.append(tx)

        for vid in audience:
            self.ledgers[vid].add(tx.start, tx.end)
        for vid in audience:
            if vid != station:
                self.queue.schedule(tx.end, self._make_delivery(tx, vid))
        if on_started is not None:
            on_started(now)
        return tx

    def _make_delivery(self, tx: Transmission, receiver: int) -> Callable[[], None]:
        def deliver() -> None:
            outcome = self._delivery_outcome(tx, receiver)
            if outcome == "delivered":
                tx.delivered += 1
                self.on_delivery(receiver, tx.beacon)
            else:
                tx.lost += 1
            if self.trace is not None:
                self.trace.append((tx.end, tx.transmitter, receiver, outcome))

        return deliver

    def _delivery_outcome(self, tx: Transmission, receiver: int) -> str:
        if self.loss_hook is not None and self.loss_hook(tx, receiver):
            return "dropped"
        for other in self._recent:
            if other is tx:
                continue
            if other.start < tx.end and other.end > tx.start and receiver in other.audience_set:
                return "collided"
        return "delivered"

    def _prune(self, now: SimTime) -> None:
        # anything ending this far back can no longer overlap a pending delivery
        horizon = now - self._max_airtime_us
        while self._recent and self._recent[0].end <= horizon:
            old = self._recent.popleft()
            if self._active_by_station.get(old.transmitter) is old:
                del self._active_by_station[old.transmitter]

    # -- observation ----------------------------------------------------------

    def cbr(self, observer: int, window: int) -> float:
        """Channel busy ratio of one observer for a fully elapsed 1 s window."""
        return self.ledgers[observer].cbr(window, self.queue.now)

    def finalize(self) -> None:
        for ledger in self.ledgers.values():
            ledger.finalize()
