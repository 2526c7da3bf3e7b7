"""Cognitive-radio substrate: channels, primary-user activity, sensing.

Primary users hold the license; secondaries may transmit only while the
primary is off the channel and must vacate within a short grace window
after the primary returns.
"""

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

from .simkernel import Engine, Rng, SimTime, s_to_us

N_CHANNELS_DEFAULT = 8
CAPACITY_BPS_DEFAULT = 1_200_000.0  # bytes/second per unshared channel
VACATE_GRACE_US = 10_000
MEAN_ON_S_DEFAULT = 1.0
MEAN_OFF_S_DEFAULT = 0.6


class Verdict(enum.Enum):
    BUSY = "busy"
    FREE = "free"


class Role(enum.Enum):
    PRIMARY = "primary"
    SECONDARY = "secondary"


@dataclass
class Channel:
    chan_id: int
    capacity_Bps: float
    primary_occupied: bool = False
    secondaries: set[str] = field(default_factory=set)

    def __post_init__(self):
        if self.capacity_Bps <= 0:
            raise ValueError("capacity_Bps must be positive")


@dataclass(frozen=True)
class PrimaryActivityModel:
    """ON/OFF alternating renewal with exponential holding times."""

    mean_on_us: SimTime
    mean_off_us: SimTime

    @property
    def duty_cycle(self) -> float:
        return self.mean_on_us / (self.mean_on_us + self.mean_off_us)


@dataclass
class SensingReport:
    sensed_at: SimTime
    verdicts: dict[int, Verdict]
    p_miss: float
    p_fa: float

    def free_channels(self) -> list[int]:
        return sorted(c for c, v in self.verdicts.items() if v is Verdict.FREE)


@dataclass
class CognitiveClient:
    node_id: str
    current_channels: set[int] = field(default_factory=set)
    role: Role = Role.SECONDARY


def sense(
    client: CognitiveClient,
    channels: list[Channel],
    rng: Rng,
    now: SimTime,
    p_miss: float = 0.0,
    p_fa: float = 0.0,
) -> SensingReport:
    """Imperfect spectrum scan: one independent detector draw per channel."""
    verdicts: dict[int, Verdict] = {}
    for chan in channels:
        if chan.primary_occupied:
            busy = rng.random() >= p_miss
        else:
            busy = rng.random() < p_fa
        verdicts[chan.chan_id] = Verdict.BUSY if busy else Verdict.FREE
    return SensingReport(sensed_at=now, verdicts=verdicts, p_miss=p_miss, p_fa=p_fa)


def effective_rate(chan: Channel, sharers: int) -> float:
    """Equal split of channel capacity; zero for secondaries under a primary."""
    if sharers < 1:
        raise ValueError("sharers must be >= 1")
    if chan.primary_occupied:
        return 0.0
    return chan.capacity_Bps / sharers


def primary_transition(chan: Channel, to_on: bool, now: SimTime) -> list[str]:
    """Flip primary state; returns node_ids that must vacate (sorted)."""
    chan.primary_occupied = to_on
    if to_on:
        return sorted(chan.secondaries)
    return []


class RadioEnvironment:
    """Owns the channel set and drives per-channel primary renewal processes.

    Channels without an attached activity model stay permanently free of
    primary traffic. VACATE notifications go to registered preemption
    listeners (base-station ports) within the grace window.
    """

    def __init__(
        self,
        engine: Engine,
        n_channels: int = N_CHANNELS_DEFAULT,
        capacity_Bps: float = CAPACITY_BPS_DEFAULT,
        vacate_grace_us: SimTime = VACATE_GRACE_US,
    ):
        self.engine = engine
        self.vacate_grace_us = vacate_grace_us
        self.channels = [Channel(i, capacity_Bps) for i in range(n_channels)]
        self._models: dict[int, PrimaryActivityModel] = {}
        self._vacate_listeners: list[Callable[[int, SimTime], None]] = []
        # (t_us, chan_id, on) transition log for the occupancy CSV
        self.occupancy_log: list[tuple[SimTime, int, bool]] = []
        engine.register("radio.primaries", self._on_transition_event)

    def attach_primary(
        self,
        chan_id: int,
        mean_on_us: SimTime = s_to_us(MEAN_ON_S_DEFAULT),
        mean_off_us: SimTime = s_to_us(MEAN_OFF_S_DEFAULT),
    ) -> None:
        self._models[chan_id] = PrimaryActivityModel(mean_on_us, mean_off_us)

    def channel(self, chan_id: int) -> Channel:
        return self.channels[chan_id]

    def on_vacate(self, listener: Callable[[int, SimTime], None]) -> None:
        self._vacate_listeners.append(listener)

    def start(self) -> None:
        """Schedule the first ON-transition of every modeled primary."""
        for chan_id in sorted(self._models):
            self._schedule_next(chan_id, to_on=True)

    def _rng(self, chan_id: int) -> Rng:
        return self.engine.rng_for(f"primary.ch{chan_id}")

    def _schedule_next(self, chan_id: int, to_on: bool) -> None:
        model = self._models[chan_id]
        mean = model.mean_off_us if to_on else model.mean_on_us
        hold = max(1, int(self._rng(chan_id).expovariate(mean)))
        self.engine.schedule_in(hold, "radio.primaries", "transition", (chan_id, to_on))

    def _on_transition_event(self, ev) -> None:
        chan_id, to_on = ev.payload
        chan = self.channels[chan_id]
        now = self.engine.now
        primary_transition(chan, to_on, now)
        self.occupancy_log.append((now, chan_id, to_on))
        if to_on:
            for listener in self._vacate_listeners:
                listener(chan_id, now)
        self._schedule_next(chan_id, to_on=not to_on)

    def on_fraction(self, chan_id: int, t_end: SimTime) -> float:
        """Time-average primary-ON fraction of one channel over [0, t_end]."""
        on_time = 0
        last_t = 0
        state = False
        for t, cid, on in self.occupancy_log:
            if cid != chan_id or t > t_end:
                continue
            if state:
                on_time += t - last_t
            last_t = t
            state = on
        if state:
            on_time += t_end - last_t
        return on_time / t_end if t_end > 0 else 0.0
