"""Logically centralized controller: control sessions, app dispatch chain,
flow-mod/stat issuance, and the network view built from control messages.

Apps never touch switch state directly; everything they know arrives via
packet-ins and reports, and everything they do leaves as commands. The
controller has a bounded per-interval processing budget and a bounded
packet-in queue, which together form the saturation model that the
denial-of-service scenarios exercise.
"""

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Protocol

from .dataplane import (
    ChannelAssignMsg,
    ErrorReplyMsg,
    FlowModMsg,
    PacketInMsg,
    RemovalMsg,
    StatsReplyMsg,
)
from .flowcore import RuleSpec
from .secchannel import ControlSession, SessionState
from .simkernel import Engine, SimTime

BUDGET_PER_INTERVAL_DEFAULT = 200
INTERVAL_US_DEFAULT = 10_000
QUEUE_BOUND_DEFAULT = 1000


class DuplicatePriority(Exception):
    pass


class SessionDown(Exception):
    pass


# -- commands apps may return -------------------------------------------

@dataclass(slots=True)
class FlowModCmd:
    node_id: str
    spec: RuleSpec
    buffer_id: Optional[int] = None


@dataclass(slots=True)
class ChannelAssignCmd:
    node_id: str
    client: str
    channels: frozenset[int]


@dataclass(slots=True)
class StatsRequestCmd:
    node_id: str


Command = FlowModCmd | ChannelAssignCmd | StatsRequestCmd


@dataclass
class AppVerdict:
    commands: list[Command] = field(default_factory=list)
    consumed: bool = False


class App(Protocol):
    name: str

    def on_packet_in(
        self, view: "NetworkView", pin: PacketInMsg, now: SimTime
    ) -> Optional[AppVerdict]: ...


# -- the view -------------------------------------------------------------

@dataclass
class HelloMsg:
    """Switch join announcement; carries the wiring the switch can see."""

    from_node: str
    kind: str
    # (local_port, peer_node, latency_us) for switch-to-switch wires
    wires: list[tuple[int, str, SimTime]] = field(default_factory=list)
    # (host_id, local_port) attachments
    hosts: list[tuple[str, int]] = field(default_factory=list)


class NetworkView:
    """What the controller knows; populated only from control messages."""

    def __init__(self):
        self.nodes: dict[str, str] = {}  # node_id -> kind label
        self.wires: dict[tuple[str, int], tuple[str, SimTime]] = {}
        self.host_at: dict[str, tuple[str, int]] = {}
        self.table_occupancy: dict[str, int] = {}
        self.radio_busy: dict[int, bool] = {}  # chan_id -> last reported state

    def absorb_hello(self, hello: HelloMsg) -> None:
        self.nodes[hello.from_node] = hello.kind
        self.table_occupancy.setdefault(hello.from_node, 0)
        for port, peer, latency in hello.wires:
            self.wires[(hello.from_node, port)] = (peer, latency)
        for host, port in hello.hosts:
            self.host_at[host] = (hello.from_node, port)

    def neighbors(self, node: str) -> list[tuple[str, int]]:
        """(peer_switch, local_port) pairs, deterministic order."""
        out = []
        for (n, port), (peer, _lat) in sorted(self.wires.items()):
            if n == node and peer in self.nodes:
                out.append((peer, port))
        return out

    def port_toward(self, src: str, dst: str) -> Optional[int]:
        """First hop port on a shortest switch-to-switch path, BFS."""
        if src == dst:
            return None
        seen = {src}
        frontier: deque[tuple[str, int]] = deque()
        for peer, port in self.neighbors(src):
            if peer not in seen:
                seen.add(peer)
                frontier.append((peer, port))
        while frontier:
            node, first_port = frontier.popleft()
            if node == dst:
                return first_port
            for peer, _ in self.neighbors(node):
                if peer not in seen:
                    seen.add(peer)
                    frontier.append((peer, first_port))
        return None


@dataclass
class ControllerCounters:
    packet_ins_received: int = 0
    packet_ins_processed: int = 0
    packet_ins_dropped_queue_full: int = 0
    no_handler: int = 0
    flow_mods_sent: int = 0
    channel_assigns_sent: int = 0
    stats_requests_sent: int = 0
    table_full_replies: int = 0
    removals_received: int = 0


@dataclass(slots=True)
class LogRecord:
    t_us: SimTime
    node: str
    kind: str
    outcome: str


class Controller:
    """Event target terminating all control sessions.

    Event kinds handled: packet_in, hello, removal, error_reply,
    stats_reply, interval_tick, app_timer.
    """

    def __init__(
        self,
        engine: Engine,
        target: str = "ctrl",
        budget_per_interval: int = BUDGET_PER_INTERVAL_DEFAULT,
        interval_us: SimTime = INTERVAL_US_DEFAULT,
        queue_bound: int = QUEUE_BOUND_DEFAULT,
    ):
        self.engine = engine
        self.target = target
        self.budget_per_interval = budget_per_interval
        self.interval_us = interval_us
        self.queue_bound = queue_bound
        self.sessions: dict[str, tuple[ControlSession, SimTime]] = {}
        self.view = NetworkView()
        self.counters = ControllerCounters()
        self.log: list[LogRecord] = []
        self.last_stats: dict[str, StatsReplyMsg] = {}
        self._apps: list[tuple[int, App]] = []  # kept sorted desc priority
        self._pending: deque[tuple[int, PacketInMsg]] = deque()
        self._used_budget = 0
        # (arrived_us, waited_us, from_node) per processed packet-in
        self.pin_service_log: list[tuple[SimTime, SimTime, str]] = []
        self._arrival: dict[int, SimTime] = {}
        self._arrival_seq = 0
        engine.register(target, self._on_event)

    # -- registration -------------------------------------------------------

    def register_app(self, app: App, priority: int) -> None:
        if any(p == priority for p, _ in self._apps):
            raise DuplicatePriority(f"priority {priority} already registered")
        self._apps.append((priority, app))
        self._apps.sort(key=lambda pa: -pa[0])

    def attach_switch(self, node_id: str, session: ControlSession, rtt_us: SimTime) -> None:
        self.sessions[node_id] = (session, rtt_us)

    def start(self) -> None:
        self.engine.schedule_in(self.interval_us, self.target, "interval_tick", None)

    # -- event handling -------------------------------------------------------

    def _on_event(self, ev) -> None:
        now = self.engine.now
        if ev.kind == "packet_in":
            self._on_packet_in_arrival(ev.payload, now)
        elif ev.kind == "interval_tick":
            self._used_budget = 0
            self._drain(now)
            self.engine.schedule_in(self.interval_us, self.target, "interval_tick", None)
        elif ev.kind == "hello":
            self.view.absorb_hello(ev.payload)
            self._log(now, ev.payload.from_node, "hello", "absorbed")
        elif ev.kind == "removal":
            msg: RemovalMsg = ev.payload
            self.counters.removals_received += len(msg.rule_ids)
            occ = self.view.table_occupancy.get(msg.from_node, 0)
            self.view.table_occupancy[msg.from_node] = max(0, occ - len(msg.rule_ids))
            self._log(now, msg.from_node, "removal", f"rules={len(msg.rule_ids)}")
        elif ev.kind == "error_reply":
            err: ErrorReplyMsg = ev.payload
            if err.reason == "table_full":
                self.counters.table_full_replies += 1
                occ = self.view.table_occupancy.get(err.from_node, 0)
                self.view.table_occupancy[err.from_node] = occ
            self._log(now, err.from_node, "error", err.reason)
        elif ev.kind == "stats_reply":
            reply: StatsReplyMsg = ev.payload
            self.last_stats[reply.from_node] = reply
            self._log(now, reply.from_node, "stats_reply", f"rules={len(reply.records)}")
        elif ev.kind == "app_timer":
            callback = ev.payload
            callback(now)

    def _on_packet_in_arrival(self, pin: PacketInMsg, now: SimTime) -> None:
        self.counters.packet_ins_received += 1
        if len(self._pending) >= self.queue_bound:
            self.counters.packet_ins_dropped_queue_full += 1
            self._log(now, pin.from_node, "packet_in", "dropped_queue_full")
            return
        self._arrival_seq += 1
        self._arrival[self._arrival_seq] = now
        pin_id = self._arrival_seq
        self._pending.append((pin_id, pin))
        self._drain(now)

    def _drain(self, now: SimTime) -> None:
        while self._pending and self._used_budget < self.budget_per_interval:
            pin_id, pin = self._pending.popleft()
            self._used_budget += 1
            arrived = self._arrival.pop(pin_id, now)
            self.pin_service_log.append((arrived, now - arrived, pin.from_node))
            self.handle_packet_in(pin, now)

    # -- dispatch -------------------------------------------------------------

    def handle_packet_in(self, pin: PacketInMsg, now: SimTime) -> list[Command]:
        self.counters.packet_ins_processed += 1
        commands: list[Command] = []
        handled = False
        for _prio, app in self._apps:
            verdict = app.on_packet_in(self.view, pin, now)
            if verdict is None:
                continue
            handled = True
            commands.extend(verdict.commands)
            if verdict.consumed:
                break
        if not handled:
            self.counters.no_handler += 1
            self._log(now, pin.from_node, "packet_in", "no_handler")
            return []
        for cmd in commands:
            self.send_command(cmd)
        self._log(now, pin.from_node, "packet_in", f"commands={len(commands)}")
        return commands

    # -- command transmission ---------------------------------------------------

    def _session_up(self, node_id: str) -> bool:
        entry = self.sessions.get(node_id)
        return entry is not None and entry[0].state is SessionState.ESTABLISHED

    def _half_rtt(self, node_id: str) -> SimTime:
        return self.sessions[node_id][1] // 2

    def send_command(self, cmd: Command) -> bool:
        """Serialize one command onto the owning control session."""
        if not self._session_up(cmd.node_id):
            self._log(self.engine.now, cmd.node_id, "command", "session_down")
            return False
        delay = self._half_rtt(cmd.node_id)
        if isinstance(cmd, FlowModCmd):
            self.counters.flow_mods_sent += 1
            occ = self.view.table_occupancy.get(cmd.node_id, 0)
            self.view.table_occupancy[cmd.node_id] = occ + 1
            self.engine.schedule_in(
                delay, cmd.node_id, "flow_mod", FlowModMsg(cmd.spec, cmd.buffer_id)
            )
        elif isinstance(cmd, ChannelAssignCmd):
            self.counters.channel_assigns_sent += 1
            self.engine.schedule_in(
                delay, cmd.node_id, "channel_assign",
                ChannelAssignMsg(cmd.client, cmd.channels),
            )
        elif isinstance(cmd, StatsRequestCmd):
            self.counters.stats_requests_sent += 1
            self.engine.schedule_in(delay, cmd.node_id, "stats_request", None)
        return True

    def request_stats(self, node_id: str) -> None:
        if not self._session_up(node_id):
            raise SessionDown(node_id)
        self.send_command(StatsRequestCmd(node_id))

    def schedule_app_timer(self, delay_us: SimTime, callback) -> None:
        """Apps get their periodic work serialized through the controller."""
        self.engine.schedule_in(delay_us, self.target, "app_timer", callback)

    def _log(self, t: SimTime, node: str, kind: str, outcome: str) -> None:
        self.log.append(LogRecord(t, node, kind, outcome))


# -- baseline forwarding app ---------------------------------------------

class L2ForwardingApp:
    """Reactive shortest-path unicast: one exact-match rule per packet-in."""

    name = "l2fwd"

    def __init__(
        self,
        priority_value: int = 10,
        idle_timeout_us: SimTime = 30_000_000,
        hard_timeout_us: SimTime = 0,
    ):
        self.rule_priority = priority_value
        self.idle_timeout_us = idle_timeout_us
        self.hard_timeout_us = hard_timeout_us

    def on_packet_in(self, view: NetworkView, pin: PacketInMsg, now: SimTime):
        from .flowcore import FlowAction, MatchPattern

        location = view.host_at.get(pin.key.dst_node)
        if location is None:
            return None
        dst_switch, dst_port = location
        if pin.from_node == dst_switch:
            out_port = dst_port
        else:
            out_port = view.port_toward(pin.from_node, dst_switch)
            if out_port is None:
                return None
        spec = RuleSpec(
            pattern=MatchPattern.exact(pin.key),
            action=FlowAction.forward(out_port),
            priority=self.rule_priority,
            idle_timeout=self.idle_timeout_us,
            hard_timeout=self.hard_timeout_us,
        )
        return AppVerdict(
            commands=[FlowModCmd(pin.from_node, spec, buffer_id=pin.buffer_id)],
            consumed=True,
        )
