"""Cognitive engine: a controller application closing the observe-decide-act
loop over spectrum. It consumes sensing reports, keeps a conservatively
merged spectrum map, allocates FREE channels to secondary clients by a
greedy longest-free-first rule, and acts through controller commands only.
"""

import enum
import hashlib
from dataclasses import dataclass, field
from typing import Optional

from .controlplane import AppVerdict, ChannelAssignCmd, Controller, FlowModCmd, L2ForwardingApp
from .flowcore import FlowAction, FlowKey, MatchPattern, RuleSpec, TrafficClass
from .radio import RadioEnvironment, CognitiveClient, Verdict, sense
from .simkernel import SimTime

EPOCH_US_DEFAULT = 100_000
STALENESS_US_DEFAULT = 250_000

CLASS_PRIORITY = {TrafficClass.VOIP: 2, TrafficClass.BULK: 1, TrafficClass.CONTROL: 0}


class MapState(enum.Enum):
    FREE = "free"
    BUSY = "busy"
    UNKNOWN = "unknown"


class Rationale(enum.Enum):
    INITIAL = "initial"
    VACATE_MOVE = "vacate_move"
    REBALANCE = "rebalance"


@dataclass
class ClassGoal:
    min_rate_Bps: float
    max_rtt_us: SimTime
    weight: float = 1.0

    def __post_init__(self):
        if self.min_rate_Bps <= 0 or self.max_rtt_us <= 0:
            raise ValueError("goal targets must be positive")


@dataclass
class EndToEndGoals:
    targets: dict[TrafficClass, ClassGoal] = field(default_factory=dict)

    @classmethod
    def defaults(cls) -> "EndToEndGoals":
        return cls(
            targets={
                TrafficClass.VOIP: ClassGoal(8_000.0, 150_000),
                TrafficClass.BULK: ClassGoal(1_000_000.0, 1_000_000),
            }
        )


@dataclass
class MapEntry:
    state: MapState = MapState.UNKNOWN
    last_seen: SimTime = -1
    free_since: SimTime = -1


class SpectrumMap:
    """Per-channel belief built only from sensing reports."""

    def __init__(self, n_channels: int):
        self.entries = {c: MapEntry() for c in range(n_channels)}

    def observe(self, report) -> None:
        for chan_id in sorted(report.verdicts):
            verdict = report.verdicts[chan_id]
            entry = self.entries[chan_id]
            busy = verdict is Verdict.BUSY
            if report.sensed_at < entry.last_seen:
                continue  # out-of-order report
            if report.sensed_at == entry.last_seen:
                # conflicting same-epoch reports: the busy one wins
                if busy and entry.state is not MapState.BUSY:
                    entry.state = MapState.BUSY
                    entry.free_since = -1
                continue
            entry.last_seen = report.sensed_at
            if busy:
                entry.state = MapState.BUSY
                entry.free_since = -1
            else:
                if entry.state is not MapState.FREE:
                    entry.free_since = report.sensed_at
                entry.state = MapState.FREE

    def mark_busy(self, chan_id: int, now: SimTime) -> None:
        """Out-of-band preemption notice (vacate)."""
        entry = self.entries[chan_id]
        entry.state = MapState.BUSY
        entry.last_seen = now
        entry.free_since = -1

    def effective_state(self, chan_id: int, now: SimTime, staleness_us: SimTime) -> MapState:
        entry = self.entries[chan_id]
        if entry.last_seen < 0 or now - entry.last_seen > staleness_us:
            return MapState.UNKNOWN
        return entry.state

    def free_channels(self, now: SimTime, staleness_us: SimTime) -> list[int]:
        """FREE channels ordered longest-free-first, ties by lowest id."""
        free = [
            (entry.free_since, chan_id)
            for chan_id, entry in sorted(self.entries.items())
            if self.effective_state(chan_id, now, staleness_us) is MapState.FREE
        ]
        free.sort()
        return [chan_id for _, chan_id in free]


@dataclass(frozen=True)
class Demand:
    node: str
    traffic_class: TrafficClass
    rate_Bps: float
    peer: str = ""


@dataclass
class AllocationPlan:
    assignments: dict[str, frozenset[int]]
    rationale: dict[str, Rationale]
    violations: list[tuple[str, TrafficClass, float]]

    def digest(self) -> str:
        parts = [
            f"{node}:{','.join(map(str, sorted(chans)))}"
            for node, chans in sorted(self.assignments.items())
        ]
        return hashlib.sha256(";".join(parts).encode()).hexdigest()[:12]


def decide(
    spectrum: SpectrumMap,
    demands: list[Demand],
    goals: EndToEndGoals,
    now: SimTime,
    capacity_Bps: float,
    previous: Optional[dict[str, frozenset[int]]] = None,
    staleness_us: SimTime = STALENESS_US_DEFAULT,
    max_channels_per_node: int = 8,
) -> AllocationPlan:
    """Pure greedy allocator. UNKNOWN channels count as BUSY.

    Demands are served in class-priority order (voice first), each taking
    the fewest FREE channels whose summed marginal rate covers its demand,
    channels ranked longest-free-first. Unmet demand degrades to
    best-effort and is reported as a violation.
    """
    previous = previous or {}
    free = spectrum.free_channels(now, staleness_us)
    sharers = {c: 0 for c in free}
    ordered = sorted(
        demands, key=lambda d: (-CLASS_PRIORITY.get(d.traffic_class, 0), d.node)
    )
    assignments: dict[str, frozenset[int]] = {}
    rationale: dict[str, Rationale] = {}
    violations: list[tuple[str, TrafficClass, float]] = []

    for demand in ordered:
        need = demand.rate_Bps
        got = 0.0
        chosen: list[int] = []
        for chan in free:
            if len(chosen) >= max_channels_per_node:
                break
            if got >= need:
                break
            chosen.append(chan)
            got += capacity_Bps / (sharers[chan] + 1)
        for chan in chosen:
            sharers[chan] += 1
        assignments[demand.node] = frozenset(chosen)
        if got < need:
            violations.append((demand.node, demand.traffic_class, need - got))
        prev = previous.get(demand.node)
        if prev is None or not prev:
            rationale[demand.node] = Rationale.INITIAL
        elif prev != assignments[demand.node]:
            still_free = {c for c in prev if c in sharers}
            rationale[demand.node] = (
                Rationale.VACATE_MOVE if still_free != prev else Rationale.REBALANCE
            )
        else:
            rationale[demand.node] = Rationale.REBALANCE
    return AllocationPlan(assignments, rationale, violations)


@dataclass(slots=True)
class DecisionRecord:
    t_us: SimTime
    plan_digest: str
    violations: int
    commands: int


class CognitiveEngineApp:
    """Controller app running the cognition loop every epoch.

    Wiring: the runner hands it the radio environment (physical truth the
    clients sense against), the cognitive clients with their owning base
    stations, and the traffic demands.
    """

    name = "cogengine"

    def __init__(
        self,
        controller: Controller,
        radio_env: RadioEnvironment,
        goals: Optional[EndToEndGoals] = None,
        epoch_us: SimTime = EPOCH_US_DEFAULT,
        staleness_us: SimTime = STALENESS_US_DEFAULT,
        max_channels_per_node: int = 8,
        p_miss: float = 0.0,
        p_fa: float = 0.0,
        rule_priority: int = 20,
    ):
        self.controller = controller
        self.radio_env = radio_env
        self.goals = goals or EndToEndGoals.defaults()
        self.epoch_us = epoch_us
        self.staleness_us = staleness_us
        self.max_channels_per_node = max_channels_per_node
        self.p_miss = p_miss
        self.p_fa = p_fa
        self.spectrum = SpectrumMap(len(radio_env.channels))
        self.demands: list[Demand] = []
        self._clients: dict[str, tuple[CognitiveClient, str]] = {}  # id -> (client, bs)
        self._issued: dict[str, frozenset[int]] = {}
        self._paths_installed: set[tuple[str, str, TrafficClass]] = set()
        self.decision_log: list[DecisionRecord] = []
        self._fwd = L2ForwardingApp(priority_value=rule_priority, idle_timeout_us=0)
        radio_env.on_vacate(self._on_vacate)

    # -- wiring ------------------------------------------------------------

    def manage_client(self, client_id: str, bs_id: str) -> None:
        self._clients[client_id] = (CognitiveClient(client_id), bs_id)

    def add_demand(self, demand: Demand) -> None:
        self.demands.append(demand)

    def start(self) -> None:
        self.controller.schedule_app_timer(self.epoch_us, self._epoch)

    # -- loop --------------------------------------------------------------

    def _on_vacate(self, chan_id: int, now: SimTime) -> None:
        self.spectrum.mark_busy(chan_id, now)

    def _epoch(self, now: SimTime) -> None:
        for client_id in sorted(self._clients):
            client, _bs = self._clients[client_id]
            rng = self.controller.engine.rng_for(client_id)
            report = sense(
                client, self.radio_env.channels, rng, now,
                p_miss=self.p_miss, p_fa=self.p_fa,
            )
            self.spectrum.observe(report)
        plan = decide(
            self.spectrum,
            self.demands,
            self.goals,
            now,
            capacity_Bps=self.radio_env.channels[0].capacity_Bps if self.radio_env.channels else 0.0,
            previous=self._issued,
            staleness_us=self.staleness_us,
            max_channels_per_node=self.max_channels_per_node,
        )
        commands = self.act(plan)
        for cmd in commands:
            self.controller.send_command(cmd)
        self.decision_log.append(
            DecisionRecord(now, plan.digest(), len(plan.violations), len(commands))
        )
        self.controller.schedule_app_timer(self.epoch_us, self._epoch)

    def act(self, plan: AllocationPlan) -> list:
        """Diff the plan against issued state; identical plans yield nothing."""
        commands = []
        for node in sorted(plan.assignments):
            channels = plan.assignments[node]
            if self._issued.get(node) == channels:
                continue
            binding = self._clients.get(node)
            if binding is None:
                continue
            client, bs_id = binding
            commands.append(ChannelAssignCmd(bs_id, node, channels))
            client.current_channels = set(channels)
            self._issued[node] = channels
            commands.extend(self._path_rules_for(node))
        return commands

    def _path_rules_for(self, node: str) -> list:
        """Permanent FORWARD rules along the wired path peer -> client."""
        out = []
        view = self.controller.view
        for demand in self.demands:
            if demand.node != node or not demand.peer:
                continue
            flow_sig = (demand.peer, node, demand.traffic_class)
            if flow_sig in self._paths_installed:
                continue
            dst_loc = view.host_at.get(node)
            src_loc = view.host_at.get(demand.peer)
            if dst_loc is None or src_loc is None:
                continue
            self._paths_installed.add(flow_sig)
            flow_key = FlowKey(demand.peer, node, demand.traffic_class, None)
            at = src_loc[0]
            hops = 0
            while at is not None and hops < 16:
                hops += 1
                if at == dst_loc[0]:
                    out_port = dst_loc[1]
                    next_at = None
                else:
                    out_port = view.port_toward(at, dst_loc[0])
                    if out_port is None:
                        break
                    next_at = view.wires[(at, out_port)][0]
                spec = RuleSpec(
                    pattern=MatchPattern.exact(flow_key),
                    action=FlowAction.forward(out_port),
                    priority=self._fwd.rule_priority,
                )
                out.append(FlowModCmd(at, spec))
                at = next_at
        return out

    # -- packet-in path ------------------------------------------------------

    def on_packet_in(self, view, pin, now: SimTime) -> Optional[AppVerdict]:
        """Flows touching a managed cognitive client are this app's to route."""
        if pin.key.dst_node in self._clients or pin.key.src_node in self._clients:
            verdict = self._fwd.on_packet_in(view, pin, now)
            if verdict is not None:
                verdict.consumed = True
            return verdict
        return None
