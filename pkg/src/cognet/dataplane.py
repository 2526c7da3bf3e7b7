"""Switch-side data plane: packet ingress, table lookup, packet-in buffering,
flow-mod application, and expiry ticks.

Wireless base stations are switches of kind COGNITIVE_BS whose client-facing
ports are radio queues; channel-assignment commands reach them through the
same control path as flow-mods.
"""

import enum
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

from .flowcore import ActionKind, FlowKey, FlowTable, InstallOutcome, MatchPattern, RuleSpec
from .secchannel import ControlSession, SessionState
from .simkernel import Engine, SimTime

CONTROLLER_TARGET = "ctrl"

BUFFER_CAPACITY_DEFAULT = 256
TABLE_CAPACITY_DEFAULT = 128
EXPIRY_TICK_US = 1_000_000


class NodeKind(enum.Enum):
    WIRED_SWITCH = "wired_switch"
    WLAN_AP = "wlan_ap"
    COGNITIVE_BS = "cognitive_bs"


@dataclass(slots=True)
class Packet:
    key: FlowKey
    size_bytes: int
    created_at: SimTime
    id: int

    def __post_init__(self):
        if self.size_bytes <= 0:
            raise ValueError("size_bytes must be positive")


class EffectKind(enum.Enum):
    FORWARDED = "forwarded"
    DROPPED_BY_RULE = "dropped_by_rule"
    DROPPED_BUFFER_FULL = "dropped_buffer_full"
    PACKET_IN_SENT = "packet_in_sent"


@dataclass(slots=True)
class DataPlaneEffect:
    kind: EffectKind
    out_port: Optional[int] = None
    buffer_id: Optional[int] = None
    control_down: bool = False  # DROPPED_BUFFER_FULL caused by a dead session


# -- control-path message payloads ---------------------------------------

@dataclass(slots=True)
class PacketInMsg:
    from_node: str
    buffer_id: int
    key: FlowKey
    size_bytes: int
    sent_at: SimTime


@dataclass(slots=True)
class FlowModMsg:
    spec: RuleSpec
    buffer_id: Optional[int] = None


@dataclass(slots=True)
class ChannelAssignMsg:
    client: str
    channels: frozenset[int]


@dataclass(slots=True)
class RemovalMsg:
    from_node: str
    rule_ids: list[int]


@dataclass(slots=True)
class ErrorReplyMsg:
    from_node: str
    reason: str


@dataclass(slots=True)
class StatsReplyMsg:
    from_node: str
    snapped_at: SimTime
    records: list[tuple[int, int, int]]  # (rule_id, packet_count, byte_count)


class PortSink(Protocol):
    def send(self, pkt: Packet) -> None: ...


class WiredPort:
    """Point-to-point wired link egress: fixed latency, no bandwidth limit."""

    def __init__(self, engine: Engine, latency_us: SimTime, dst_target: str):
        self.engine = engine
        self.latency_us = latency_us
        self.dst_target = dst_target

    def send(self, pkt: Packet) -> None:
        self.engine.schedule_in(self.latency_us, self.dst_target, "ingress", pkt)


@dataclass
class SwitchCounters:
    ingress: int = 0
    forwarded: int = 0
    dropped_by_rule: int = 0
    dropped_buffer_full: int = 0
    dropped_control_down: int = 0
    dropped_install_reject: int = 0
    packet_in_sent: int = 0
    flow_mods_applied: int = 0
    table_full_rejections: int = 0
    removals_sent: int = 0
    releases: int = 0
    channel_assigns: int = 0


@dataclass(slots=True)
class FlowModResult:
    outcome: InstallOutcome
    released: Optional[DataPlaneEffect]
    unknown_buffer: bool


class SwitchNode:
    """An OpenFlow-style forwarding element driven by engine events.

    Event kinds handled: ingress, flow_mod, channel_assign, stats_request,
    expiry_tick.
    """

    def __init__(
        self,
        engine: Engine,
        node_id: str,
        kind: NodeKind = NodeKind.WIRED_SWITCH,
        table_capacity: int = TABLE_CAPACITY_DEFAULT,
        buffer_capacity: int = BUFFER_CAPACITY_DEFAULT,
        controller_target: str = CONTROLLER_TARGET,
    ):
        self.engine = engine
        self.node_id = node_id
        self.kind = kind
        self.table = FlowTable(table_capacity)
        self.buffer_capacity = buffer_capacity
        self.controller_target = controller_target
        self.ports: dict[int, PortSink] = {}
        self.counters = SwitchCounters()
        self.control: Optional[ControlSession] = None
        self.control_rtt_us: SimTime = 0
        # buffer_id -> (packet, pin sent time); insertion ordered
        self._buffer: "OrderedDict[int, tuple[Packet, SimTime]]" = OrderedDict()
        self._next_buffer_id = 1
        self.set_channel_hook: Optional[Callable[[str, frozenset[int]], None]] = None
        # (packet, reason) on every locally dropped packet, for loss attribution
        self.drop_hook: Optional[Callable[[Packet, str], None]] = None
        # completed flow setups: (src_node, latency_us) per released buffer
        self.setup_latencies: list[tuple[str, SimTime]] = []
        engine.register(node_id, self._on_event)

    # -- wiring -----------------------------------------------------------

    def attach_port(self, port: int, sink: PortSink) -> None:
        self.ports[port] = sink

    def set_control(self, session: ControlSession, rtt_us: SimTime) -> None:
        self.control = session
        self.control_rtt_us = rtt_us

    def control_up(self) -> bool:
        return self.control is not None and self.control.state is SessionState.ESTABLISHED

    @property
    def buffer_occupancy(self) -> int:
        return len(self._buffer)

    # -- event dispatch ----------------------------------------------------

    def _on_event(self, ev) -> None:
        if ev.kind == "ingress":
            self.on_packet(ev.payload, self.engine.now)
        elif ev.kind == "flow_mod":
            self.on_flow_mod(ev.payload, self.engine.now)
        elif ev.kind == "channel_assign":
            self.on_channel_assign(ev.payload)
        elif ev.kind == "stats_request":
            self._on_stats_request()
        elif ev.kind == "expiry_tick":
            self.tick_expiry(self.engine.now)
            self.engine.schedule_in(EXPIRY_TICK_US, self.node_id, "expiry_tick", None)

    def start_expiry_ticks(self, period_us: SimTime = EXPIRY_TICK_US) -> None:
        self.engine.schedule_in(period_us, self.node_id, "expiry_tick", None)

    # -- packet path -------------------------------------------------------

    def on_packet(self, pkt: Packet, now: SimTime) -> DataPlaneEffect:
        self.counters.ingress += 1
        return self._process(pkt, now)

    def _process(self, pkt: Packet, now: SimTime) -> DataPlaneEffect:
        rule = self.table.match_packet(pkt.key)
        if rule is not None:
            self.table.apply_hit(rule, pkt.size_bytes, now)
            act = rule.action
            if act.kind is ActionKind.FORWARD:
                sink = self.ports.get(act.out_port)
                if sink is not None:
                    sink.send(pkt)
                    self.counters.forwarded += 1
                    return DataPlaneEffect(EffectKind.FORWARDED, out_port=act.out_port)
                self.counters.dropped_by_rule += 1
                self._dropped(pkt, "dropped_by_rule")
                return DataPlaneEffect(EffectKind.DROPPED_BY_RULE)
            self.counters.dropped_by_rule += 1
            self._dropped(pkt, "dropped_by_rule")
            return DataPlaneEffect(EffectKind.DROPPED_BY_RULE)
        # table miss
        if not self.control_up():
            self.counters.dropped_buffer_full += 1
            self.counters.dropped_control_down += 1
            self._dropped(pkt, "control_down")
            return DataPlaneEffect(EffectKind.DROPPED_BUFFER_FULL, control_down=True)
        if len(self._buffer) >= self.buffer_capacity:
            self.counters.dropped_buffer_full += 1
            self._dropped(pkt, "buffer_full")
            return DataPlaneEffect(EffectKind.DROPPED_BUFFER_FULL)
        buffer_id = self._next_buffer_id
        self._next_buffer_id += 1
        self._buffer[buffer_id] = (pkt, now)
        pin = PacketInMsg(self.node_id, buffer_id, pkt.key, pkt.size_bytes, now)
        self.engine.schedule_in(
            self.control_rtt_us // 2, self.controller_target, "packet_in", pin
        )
        self.counters.packet_in_sent += 1
        return DataPlaneEffect(EffectKind.PACKET_IN_SENT, buffer_id=buffer_id)

    # -- control path ------------------------------------------------------

    def on_flow_mod(self, msg: FlowModMsg, now: SimTime) -> FlowModResult:
        outcome, _rule = self.table.install_rule(msg.spec, now)
        if outcome is not InstallOutcome.REJECTED:
            self.counters.flow_mods_applied += 1
            if (
                msg.spec.action.kind is ActionKind.SET_CHANNEL
                and self.set_channel_hook is not None
                and msg.spec.pattern.dst_node is not MatchPattern.WILDCARD
            ):
                self.set_channel_hook(
                    str(msg.spec.pattern.dst_node),
                    frozenset({msg.spec.action.channel}),
                )
        else:
            self.counters.table_full_rejections += 1
            self._send_to_controller("error_reply", ErrorReplyMsg(self.node_id, "table_full"))

        released = None
        unknown_buffer = False
        if msg.buffer_id is not None:
            entry = self._buffer.pop(msg.buffer_id, None)
            if entry is None:
                unknown_buffer = True
            elif outcome is InstallOutcome.REJECTED:
                # nothing to match the packet against; re-buffering would
                # just loop, so the held packet is dropped and counted
                self.counters.dropped_install_reject += 1
                self._dropped(entry[0], "install_reject")
            else:
                pkt, pinned_at = entry
                self.counters.releases += 1
                self.setup_latencies.append((pkt.key.src_node, now - pinned_at))
                released = self._process(pkt, now)
        return FlowModResult(outcome, released, unknown_buffer)

    def _dropped(self, pkt: Packet, reason: str) -> None:
        if self.drop_hook is not None:
            self.drop_hook(pkt, reason)

    def on_channel_assign(self, msg: ChannelAssignMsg) -> None:
        self.counters.channel_assigns += 1
        if self.set_channel_hook is not None:
            self.set_channel_hook(msg.client, msg.channels)

    def tick_expiry(self, now: SimTime) -> list[int]:
        evicted = self.table.expire_rules(now)
        if evicted and self.control_up():
            self.counters.removals_sent += len(evicted)
            self._send_to_controller("removal", RemovalMsg(self.node_id, evicted))
        return evicted

    def _on_stats_request(self) -> None:
        records = [
            (r.rule_id, r.packet_count, r.byte_count)
            for r in sorted(self.table.rules(), key=lambda r: r.rule_id)
        ]
        self._send_to_controller(
            "stats_reply", StatsReplyMsg(self.node_id, self.engine.now, records)
        )

    def _send_to_controller(self, kind: str, payload) -> None:
        if self.control_up():
            self.engine.schedule_in(
                self.control_rtt_us // 2, self.controller_target, kind, payload
            )
