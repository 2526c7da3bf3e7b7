"""Workload generators (bulk, voice calls, RTT probes), the base-station
radio egress queues they contend on, and the measurement store.

Bulk traffic is rate-based rather than a TCP model; a 0.96 overhead factor
stands in for transport/IP framing. Voice frames are echoed by the callee
so the caller observes a round-trip time per frame; a call whose RTT ever
exceeds the threshold is dropped and stays dropped.
"""

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .dataplane import Packet, PortSink
from .flowcore import FlowKey, TrafficClass
from .radio import RadioEnvironment
from .simkernel import Engine, SimTime, US_PER_S

OVERHEAD_FACTOR_DEFAULT = 0.96
RADIO_QUEUE_CAP_DEFAULT = 64
RADIO_IDLE_POLL_US = 1_000
THROUGHPUT_WINDOW_US = 1_000_000
VOIP_INTERVAL_US = 20_000
VOIP_PAYLOAD_BYTES = 160
VOIP_RTT_THRESHOLD_US = 150_000


def flow_sig(key: FlowKey) -> str:
    hint = "-" if key.port_hint is None else str(key.port_hint)
    return f"{key.src_node}>{key.dst_node}:{key.traffic_class.value}:{hint}"


# -- traffic specs ---------------------------------------------------------

@dataclass
class BulkFlowSpec:
    src: str
    dst: str
    offered_rate_Bps: float
    packet_size_bytes: int = 1460
    start_us: SimTime = 0
    stop_us: SimTime = 0

    def key(self) -> FlowKey:
        return FlowKey(self.src, self.dst, TrafficClass.BULK, None)


@dataclass
class VoipCallSpec:
    src: str
    dst: str
    start_us: SimTime
    duration_us: SimTime
    call_id: int
    interval_us: SimTime = VOIP_INTERVAL_US
    payload_bytes: int = VOIP_PAYLOAD_BYTES
    rtt_threshold_us: SimTime = VOIP_RTT_THRESHOLD_US

    def key(self) -> FlowKey:
        return FlowKey(self.src, self.dst, TrafficClass.VOIP, self.call_id)


@dataclass
class ProbeSpec:
    src: str
    dst: str
    probe_id: int
    interval_us: SimTime = 100_000
    size_bytes: int = 64
    start_us: SimTime = 0
    stop_us: SimTime = 0

    def key(self) -> FlowKey:
        return FlowKey(self.src, self.dst, TrafficClass.CONTROL, self.probe_id)


class CallState(enum.Enum):
    ACTIVE = "active"
    COMPLETED = "completed"
    DROPPED = "dropped"


@dataclass
class CallRecord:
    call_id: int
    src: str
    dst: str
    state: CallState = CallState.ACTIVE
    started_us: SimTime = 0
    ended_us: SimTime = 0
    drop_rtt_us: SimTime = 0
    threshold_us: SimTime = VOIP_RTT_THRESHOLD_US


@dataclass
class FlowTotals:
    sent_pkts: int = 0
    sent_bytes: int = 0
    delivered_pkts: int = 0
    delivered_bytes: int = 0
    lost_pkts: int = 0
    lost_bytes: int = 0


class MetricsStore:
    """Append-only measurement sink; serialized to CSV after the run."""

    def __init__(self):
        self.totals: dict[str, FlowTotals] = {}
        self.deliveries: list[tuple[SimTime, str, int]] = []
        self.losses: list[tuple[SimTime, str, str, int]] = []
        self.rtt_samples: list[tuple[SimTime, str, SimTime, str]] = []
        self.calls: dict[int, CallRecord] = {}
        self.loss_reasons: dict[tuple[str, str], int] = {}

    def _totals(self, sig: str) -> FlowTotals:
        totals = self.totals.get(sig)
        if totals is None:
            totals = self.totals[sig] = FlowTotals()
        return totals

    def record_sent(self, sig: str, nbytes: int) -> None:
        t = self._totals(sig)
        t.sent_pkts += 1
        t.sent_bytes += nbytes

    def record_delivery(self, sig: str, nbytes: int, now: SimTime) -> None:
        t = self._totals(sig)
        t.delivered_pkts += 1
        t.delivered_bytes += nbytes
        self.deliveries.append((now, sig, nbytes))

    def record_loss(self, key: FlowKey, reason: str, nbytes: int, now: SimTime = 0) -> None:
        sig = flow_sig(key)
        t = self._totals(sig)
        t.lost_pkts += 1
        t.lost_bytes += nbytes
        self.losses.append((now, sig, reason, nbytes))
        pair = (sig, reason)
        self.loss_reasons[pair] = self.loss_reasons.get(pair, 0) + 1

    def record_rtt(self, sig: str, now: SimTime, rtt_us: SimTime, tag: str) -> None:
        self.rtt_samples.append((now, sig, rtt_us, tag))

    # -- throughput ---------------------------------------------------------

    def measure_throughput(
        self, sig: str, window_us: SimTime = THROUGHPUT_WINDOW_US, t_end: SimTime = 0
    ) -> list[tuple[SimTime, float]]:
        """Per-bucket delivered rate for one flow: (bucket_start_us, B/s)."""
        if window_us <= 0:
            raise ValueError("window must be positive")
        buckets: dict[int, int] = {}
        horizon = t_end
        for t, s, nbytes in self.deliveries:
            if s != sig:
                continue
            buckets[t // window_us] = buckets.get(t // window_us, 0) + nbytes
            horizon = max(horizon, t)
        if not buckets and horizon == 0:
            return []
        n_buckets = horizon // window_us + 1
        scale = US_PER_S / window_us
        return [
            (idx * window_us, buckets.get(idx, 0) * scale)
            for idx in range(n_buckets)
        ]

    def mean_goodput_Bps(self, sig: str, t0: SimTime, t1: SimTime) -> float:
        total = sum(
            nbytes for t, s, nbytes in self.deliveries if s == sig and t0 <= t < t1
        )
        span_s = (t1 - t0) / US_PER_S
        return total / span_s if span_s > 0 else 0.0

    # -- calls ---------------------------------------------------------------

    def open_call(self, spec: VoipCallSpec) -> CallRecord:
        rec = CallRecord(
            spec.call_id, spec.src, spec.dst,
            started_us=spec.start_us, threshold_us=spec.rtt_threshold_us,
        )
        self.calls[spec.call_id] = rec
        return rec

    def voip_monitor(self, call_id: int, rtt_us: SimTime, now: SimTime) -> CallState:
        rec = self.calls[call_id]
        if rec.state is not CallState.ACTIVE:
            return rec.state  # DROPPED/COMPLETED are absorbing
        if rtt_us > rec.threshold_us:
            rec.state = CallState.DROPPED
            rec.ended_us = now
            rec.drop_rtt_us = rtt_us
        return rec.state

    def complete_call(self, call_id: int, now: SimTime) -> None:
        rec = self.calls[call_id]
        if rec.state is CallState.ACTIVE:
            rec.state = CallState.COMPLETED
            rec.ended_us = now

    def call_rate(self, window_us: SimTime, t_end: SimTime) -> list[tuple[SimTime, float]]:
        """Completed calls per second, bucketed by completion time."""
        if not self.calls or t_end <= 0:
            return []
        buckets: dict[int, int] = {}
        for rec in self.calls.values():
            if rec.state is CallState.COMPLETED:
                buckets[rec.ended_us // window_us] = buckets.get(rec.ended_us // window_us, 0) + 1
        scale = US_PER_S / window_us
        return [
            (idx * window_us, buckets.get(idx, 0) * scale)
            for idx in range(t_end // window_us + 1)
        ]

    def drop_fraction(self) -> float:
        if not self.calls:
            return 0.0
        dropped = sum(1 for r in self.calls.values() if r.state is CallState.DROPPED)
        return dropped / len(self.calls)

    # -- audits ----------------------------------------------------------------

    def conservation_report(self) -> list[tuple[str, int]]:
        """Per-flow in-flight count; a negative value is an accounting bug."""
        out = []
        for sig in sorted(self.totals):
            t = self.totals[sig]
            out.append((sig, t.sent_pkts - t.delivered_pkts - t.lost_pkts))
        return out

    def recompute_drops_from_rtt_log(self) -> dict[int, bool]:
        """Oracle: a call is dropped iff any logged sample exceeds threshold."""
        out = {}
        for call_id, rec in self.calls.items():
            sig = flow_sig(FlowKey(rec.src, rec.dst, TrafficClass.VOIP, call_id))
            out[call_id] = any(
                rtt > rec.threshold_us
                for _, s, rtt, _ in self.rtt_samples
                if s == sig
            )
        return out


# -- radio egress ------------------------------------------------------------

class BsRadio:
    """Per-client channel assignments and egress queues of one base station.

    The send side of the switch FORWARDs into a client's RadioPort; service
    rate is the client's share of its currently primary-free channels.
    """

    def __init__(
        self,
        engine: Engine,
        env: RadioEnvironment,
        bs_id: str,
        store: MetricsStore,
        overhead: float = OVERHEAD_FACTOR_DEFAULT,
        queue_cap: int = RADIO_QUEUE_CAP_DEFAULT,
    ):
        self.engine = engine
        self.env = env
        self.bs_id = bs_id
        self.store = store
        self.overhead = overhead
        self.queue_cap = queue_cap
        self.assignments: dict[str, frozenset[int]] = {}
        self.ports: dict[str, RadioPort] = {}

    def add_client(self, client_id: str, client_target: str) -> "RadioPort":
        port = RadioPort(self, client_id, client_target)
        self.ports[client_id] = port
        return port

    def assign(self, client_id: str, channels: frozenset[int]) -> None:
        old = self.assignments.get(client_id, frozenset())
        self.assignments[client_id] = frozenset(channels)
        for chan in old - channels:
            self.env.channels[chan].secondaries.discard(client_id)
        for chan in channels - old:
            self.env.channels[chan].secondaries.add(client_id)
        port = self.ports.get(client_id)
        if port is not None:
            port.kick()

    def sharers(self, chan_id: int) -> int:
        return sum(1 for chans in self.assignments.values() if chan_id in chans)

    def rate_for(self, client_id: str) -> float:
        total = 0.0
        for chan_id in self.assignments.get(client_id, ()):
            chan = self.env.channels[chan_id]
            if not chan.primary_occupied:
                total += chan.capacity_Bps / self.sharers(chan_id)
        return total * self.overhead


class RadioPort:
    """Bounded FIFO downlink queue for one wireless client."""

    def __init__(self, radio: BsRadio, client_id: str, client_target: str):
        self.radio = radio
        self.client_id = client_id
        self.client_target = client_target
        self.target = f"radio.{radio.bs_id}.{client_id}"
        self.queue: deque[Packet] = deque()
        self.busy = False
        self.delivered = 0
        self.dropped = 0
        radio.engine.register(self.target, self._on_event)

    def send(self, pkt: Packet) -> None:
        if len(self.queue) >= self.radio.queue_cap:
            self.dropped += 1
            self.radio.store.record_loss(
                pkt.key, "radio_queue_full", pkt.size_bytes, self.radio.engine.now
            )
            return
        self.queue.append(pkt)
        if not self.busy:
            self._serve()

    def kick(self) -> None:
        """Assignment change: wake the port if it is idle with backlog."""
        if not self.busy and self.queue:
            self._serve()

    def _serve(self) -> None:
        if not self.queue:
            self.busy = False
            return
        self.busy = True
        rate = self.radio.rate_for(self.client_id)
        if rate <= 0.0:
            self.radio.engine.schedule_in(RADIO_IDLE_POLL_US, self.target, "retry", None)
            return
        head = self.queue[0]
        tx_us = max(1, math.ceil(head.size_bytes / rate * US_PER_S))
        self.radio.engine.schedule_in(tx_us, self.target, "tx_done", None)

    def _on_event(self, ev) -> None:
        if ev.kind == "tx_done":
            pkt = self.queue.popleft()
            self.delivered += 1
            self.radio.engine.schedule_in(0, self.client_target, "ingress", pkt)
            self._serve()
        elif ev.kind == "retry":
            self._serve()


# -- hosts and generators ------------------------------------------------------

class Host:
    """Traffic endpoint. Delivers to flow handlers; echoes voice and probe
    frames it has no handler for (the callee/responder side)."""

    def __init__(self, engine: Engine, host_id: str, store: MetricsStore):
        self.engine = engine
        self.host_id = host_id
        self.store = store
        self.uplink: Optional[PortSink] = None
        self._handlers: dict[tuple[str, TrafficClass, Optional[int]], Callable] = {}
        engine.register(host_id, self._on_event)

    def attach_uplink(self, sink: PortSink) -> None:
        self.uplink = sink

    def on_flow(self, src: str, traffic_class: TrafficClass, port_hint, handler) -> None:
        self._handlers[(src, traffic_class, port_hint)] = handler

    def emit(self, key: FlowKey, size_bytes: int, pkt_id: int, created_at: SimTime) -> None:
        pkt = Packet(key, size_bytes, created_at, pkt_id)
        self.store.record_sent(flow_sig(key), size_bytes)
        if self.uplink is None:
            self.store.record_loss(key, "no_uplink", size_bytes, self.engine.now)
            return
        self.uplink.send(pkt)

    def _on_event(self, ev) -> None:
        if ev.kind != "ingress":
            return
        pkt: Packet = ev.payload
        now = self.engine.now
        self.store.record_delivery(flow_sig(pkt.key), pkt.size_bytes, now)
        handler = self._handlers.get(
            (pkt.key.src_node, pkt.key.traffic_class, pkt.key.port_hint)
        )
        if handler is not None:
            handler(pkt, now)
        elif pkt.key.traffic_class in (TrafficClass.VOIP, TrafficClass.CONTROL):
            self._echo(pkt)

    def _echo(self, pkt: Packet) -> None:
        reply_key = FlowKey(
            self.host_id, pkt.key.src_node, pkt.key.traffic_class, pkt.key.port_hint
        )
        # created_at rides along so the caller can form the RTT sample
        self.emit(reply_key, pkt.size_bytes, pkt.id, pkt.created_at)


class BulkSource:
    """Constant-rate packet emitter; offered load, not goodput."""

    def __init__(self, engine: Engine, host: Host, spec: BulkFlowSpec, idx: int):
        self.engine = engine
        self.host = host
        self.spec = spec
        self.target = f"bulk.{idx}"
        self.interval_us = max(
            1, round(spec.packet_size_bytes / spec.offered_rate_Bps * US_PER_S)
        )
        self._next_id = 0
        engine.register(self.target, self._on_tick)
        engine.schedule(spec.start_us, self.target, "emit", None)

    def _on_tick(self, ev) -> None:
        now = self.engine.now
        if now >= self.spec.stop_us:
            return
        self._next_id += 1
        self.host.emit(self.spec.key(), self.spec.packet_size_bytes, self._next_id, now)
        self.engine.schedule_in(self.interval_us, self.target, "emit", None)


class VoipCall:
    """Caller-side frame clock and drop monitor for one call."""

    def __init__(self, engine: Engine, caller: Host, store: MetricsStore, spec: VoipCallSpec):
        self.engine = engine
        self.caller = caller
        self.store = store
        self.spec = spec
        self.target = f"voip.{spec.call_id}"
        self._next_id = 0
        store.open_call(spec)
        # echoes come back with the flow direction reversed
        caller.on_flow(spec.dst, TrafficClass.VOIP, spec.call_id, self._on_echo)
        engine.register(self.target, self._on_event)
        engine.schedule(spec.start_us, self.target, "frame", None)
        engine.schedule(spec.start_us + spec.duration_us, self.target, "end", None)

    def _record(self) -> CallRecord:
        return self.store.calls[self.spec.call_id]

    def _on_event(self, ev) -> None:
        if ev.kind == "frame":
            if self._record().state is not CallState.ACTIVE:
                return
            now = self.engine.now
            if now >= self.spec.start_us + self.spec.duration_us:
                return
            self._next_id += 1
            self.caller.emit(self.spec.key(), self.spec.payload_bytes, self._next_id, now)
            self.engine.schedule_in(self.spec.interval_us, self.target, "frame", None)
        elif ev.kind == "end":
            self.store.complete_call(self.spec.call_id, self.engine.now)

    def _on_echo(self, pkt: Packet, now: SimTime) -> None:
        # echoes landing after the call closed are not judged, so they are
        # not logged either: the RTT log holds exactly the judged samples
        if self._record().state is not CallState.ACTIVE:
            return
        rtt = now - pkt.created_at
        self.store.record_rtt(flow_sig(self.spec.key()), now, rtt, "steady")
        self.store.voip_monitor(self.spec.call_id, rtt, now)


class ProbeFlow:
    """Request/echo RTT sampler; the first sample carries flow-setup cost."""

    def __init__(self, engine: Engine, prober: Host, store: MetricsStore, spec: ProbeSpec):
        self.engine = engine
        self.prober = prober
        self.store = store
        self.spec = spec
        self.target = f"probe.{spec.probe_id}"
        self._next_id = 0
        self._samples = 0
        prober.on_flow(spec.dst, TrafficClass.CONTROL, spec.probe_id, self._on_echo)
        engine.register(self.target, self._on_tick)
        engine.schedule(spec.start_us, self.target, "emit", None)

    def _on_tick(self, ev) -> None:
        now = self.engine.now
        if now >= self.spec.stop_us:
            return
        self._next_id += 1
        self.prober.emit(self.spec.key(), self.spec.size_bytes, self._next_id, now)
        self.engine.schedule_in(self.spec.interval_us, self.target, "emit", None)

    def _on_echo(self, pkt: Packet, now: SimTime) -> None:
        tag = "setup" if self._samples == 0 else "steady"
        self._samples += 1
        self.store.record_rtt(flow_sig(self.spec.key()), now, now - pkt.created_at, tag)
