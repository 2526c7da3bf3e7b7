"""Deterministic discrete-event engine: clock, ordered event queue, seeded RNG.

Time is integer microseconds. Events are totally ordered by (fire_at, seq)
where seq is the global insertion sequence, so same-time events fire in
insertion order and every run of the same scenario replays the same stream.
"""

import hashlib
import heapq
import math
from dataclasses import dataclass
from typing import Any, Callable, Optional

SimTime = int  # microseconds since simulation start

US_PER_S = 1_000_000


def s_to_us(seconds: float) -> SimTime:
    return int(round(seconds * US_PER_S))


def us_to_s(t: SimTime) -> float:
    return t / US_PER_S


class SchedulingInPast(Exception):
    """Raised when an event is scheduled before the current clock."""


_MASK64 = (1 << 64) - 1


class Rng:
    """splitmix64-based generator with a platform-stable output sequence.

    The core step is splitmix64 (Steele et al.); derived floating-point
    draws use only IEEE-754 double arithmetic, so the exact sample
    sequence for a given seed is identical everywhere.
    """

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return (z ^ (z >> 31)) & _MASK64

    def random(self) -> float:
        """Uniform double in [0, 1) with 53 bits of entropy."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def randrange(self, n: int) -> int:
        # Modulo bias is negligible for the small n used here.
        return self.next_u64() % n

    def expovariate(self, mean: float) -> float:
        """Exponential holding time with the given mean."""
        return -mean * math.log(1.0 - self.random())

    def gauss(self, mu: float, sigma: float) -> float:
        # Box-Muller, no spare caching so the draw count per call is fixed.
        u1 = self.random()
        u2 = self.random()
        while u1 <= 1e-300:
            u1 = self.random()
        return mu + sigma * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def positive_gauss(self, mu: float, sigma: float) -> float:
        """Normal sample truncated to strictly positive values."""
        x = self.gauss(mu, sigma)
        while x <= 0.0:
            x = self.gauss(mu, sigma)
        return x


def derive_stream(master_seed: int, node_id: str) -> Rng:
    """Per-node stream split from the master seed.

    The split hashes (master_seed, node_id) with SHA-256 and takes the first
    8 bytes as the child seed, so adding or removing a node never perturbs
    the draws of any other node.
    """
    digest = hashlib.sha256(f"{master_seed}:{node_id}".encode()).digest()
    return Rng(int.from_bytes(digest[:8], "big"))


@dataclass(slots=True)
class SimEvent:
    fire_at: SimTime
    seq: int
    target: str
    kind: str
    payload: Any = None


@dataclass
class RunSummary:
    events_processed: int
    clock: SimTime
    trace_digest: str


Handler = Callable[[SimEvent], None]


class Engine:
    """Single-threaded event loop; all module state advances through it."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.clock: SimTime = 0
        self._heap: list[tuple[SimTime, int, SimEvent]] = []
        self._seq = 0
        self._handlers: dict[str, Handler] = {}
        self._streams: dict[str, Rng] = {}
        self._hasher = hashlib.sha256()
        self._processed = 0
        self.trace_hook: Optional[Callable[[SimEvent], None]] = None

    def register(self, target: str, handler: Handler) -> None:
        self._handlers[target] = handler

    def rng_for(self, node_id: str) -> Rng:
        stream = self._streams.get(node_id)
        if stream is None:
            stream = derive_stream(self.seed, node_id)
            self._streams[node_id] = stream
        return stream

    def schedule(self, fire_at: SimTime, target: str, kind: str, payload: Any = None) -> SimEvent:
        if fire_at < self.clock:
            raise SchedulingInPast(
                f"event {kind!r} for {target!r} at t={fire_at} is before clock t={self.clock}"
            )
        ev = SimEvent(fire_at, self._seq, target, kind, payload)
        self._seq += 1
        heapq.heappush(self._heap, (fire_at, ev.seq, ev))
        return ev

    def schedule_in(self, delay: SimTime, target: str, kind: str, payload: Any = None) -> SimEvent:
        return self.schedule(self.clock + delay, target, kind, payload)

    def cancel(self, ev: SimEvent) -> None:
        """Mark an event dead; it is skipped (and not digested) when popped."""
        ev.kind = ""

    def run_until(self, t_end: SimTime) -> RunSummary:
        if t_end < self.clock:
            raise SchedulingInPast(f"t_end={t_end} is before clock t={self.clock}")
        heap = self._heap
        update = self._hasher.update
        while heap and heap[0][0] <= t_end:
            fire_at, seq, ev = heapq.heappop(heap)
            if not ev.kind:
                continue  # cancelled
            self.clock = fire_at
            update(b"%d,%d,%s,%s\n" % (fire_at, seq, ev.target.encode(), ev.kind.encode()))
            self._processed += 1
            if self.trace_hook is not None:
                self.trace_hook(ev)
            handler = self._handlers.get(ev.target)
            if handler is not None:
                handler(ev)
        self.clock = t_end
        return RunSummary(self._processed, self.clock, self._hasher.hexdigest())

    @property
    def now(self) -> SimTime:
        return self.clock

    @property
    def trace_digest(self) -> str:
        return self._hasher.hexdigest()

    @property
    def events_processed(self) -> int:
        return self._processed
