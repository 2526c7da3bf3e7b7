"""Adversarial workloads against the data and control planes.

Three models: exhausting a switch flow table with unique header flows,
saturating the controller's packet-in service, and forging flow-mods on
the switch-controller channel. The forged-rule path is only open when
the control channel runs in the clear; an encrypted session rejects the
injection outright. Reports are assembled from the planes' own counters
so they cannot drift from what the simulation actually did.
"""

import enum
from dataclasses import dataclass, field
from typing import Optional

from .controlplane import Controller
from .dataplane import FlowModMsg, SwitchNode
from .flowcore import FlowAction, FlowKey, MatchPattern, RuleSpec, TrafficClass
from .secchannel import SecurityPosture, secure_flag
from .simkernel import Engine, SimTime, US_PER_S
from .traffic_metrics import Host

ATTACK_PKT_BYTES = 100
MITM_RULE_PRIORITY = 99


class AttackKind(enum.Enum):
    TABLE_FLOOD = "table_flood"
    CONTROLLER_FLOOD = "controller_flood"
    MITM_INJECT = "mitm_inject"


@dataclass(frozen=True)
class AttackSpec:
    kind: AttackKind
    rate_per_s: float
    start_us: SimTime
    stop_us: SimTime
    target: str
    attacker: str = "attacker"
    victim_dst: str = ""
    victim_src: str = ""

    def __post_init__(self):
        if self.kind is not AttackKind.MITM_INJECT and self.rate_per_s <= 0:
            raise ValueError("flood rate must be positive")
        if self.stop_us < self.start_us:
            raise ValueError("stop precedes start")


class FloodSource:
    """Emits packets whose headers never repeat, so every one is a new flow.

    The destination is a real host the forwarding app knows, which makes
    each packet-in produce an install attempt; that is what exhausts the
    table (or, at high rate, the controller).
    """

    def __init__(self, engine: Engine, host: Host, spec: AttackSpec, idx: int = 0):
        if not spec.victim_dst:
            raise ValueError("flood needs a destination host")
        self.engine = engine
        self.host = host
        self.spec = spec
        self.target = f"attack.{idx}"
        self.interval_us = max(1, round(US_PER_S / spec.rate_per_s))
        self.sent = 0
        engine.register(self.target, self._on_tick)
        engine.schedule(spec.start_us, self.target, "emit", None)

    def _on_tick(self, ev) -> None:
        now = self.engine.now
        if now >= self.spec.stop_us:
            return
        self.sent += 1
        key = FlowKey(
            self.spec.attacker, self.spec.victim_dst, TrafficClass.BULK, self.sent
        )
        self.host.emit(key, ATTACK_PKT_BYTES, self.sent, now)
        self.engine.schedule_in(self.interval_us, self.target, "emit", None)


class MitmInjector:
    """On-path adversary on the control link trying to plant a DROP rule.

    The attempt only reaches the switch when the session carries cleartext;
    authenticated channels make the forgery undeliverable.
    """

    def __init__(self, engine: Engine, switch: SwitchNode, spec: AttackSpec):
        if not (spec.victim_src and spec.victim_dst):
            raise ValueError("injection needs the victim flow endpoints")
        self.engine = engine
        self.switch = switch
        self.spec = spec
        self.target = f"mitm.{switch.node_id}"
        self.attempted = 0
        self.accepted = 0
        engine.register(self.target, self._on_attempt)
        engine.schedule(spec.start_us, self.target, "inject", None)

    def forged_rule(self) -> RuleSpec:
        key = FlowKey(
            self.spec.victim_src, self.spec.victim_dst, TrafficClass.BULK, None
        )
        return RuleSpec(
            MatchPattern.exact(key), FlowAction.drop(), MITM_RULE_PRIORITY
        )

    def _on_attempt(self, ev) -> None:
        self.attempted += 1
        session = self.switch.control
        if session is not None and secure_flag(session) is SecurityPosture.CLEARTEXT:
            self.accepted += 1
            self.engine.schedule_in(
                0, self.switch.node_id, "flow_mod",
                FlowModMsg(self.forged_rule(), None),
            )


@dataclass
class AttackReport:
    """Outcome counters, all sourced from the planes themselves."""

    kind: AttackKind
    attack_pkts_sent: int = 0
    table_full_rejections: int = 0
    controller_queue_drops: int = 0
    legit_setups_attempted: int = 0
    legit_setups_completed: int = 0
    legit_setup_latencies_us: list[SimTime] = field(default_factory=list)
    injected_attempted: int = 0
    injected_accepted: int = 0

    @property
    def legit_setup_failures(self) -> int:
        return self.legit_setups_attempted - self.legit_setups_completed

    def mean_legit_latency_us(self) -> float:
        lats = self.legit_setup_latencies_us
        return sum(lats) / len(lats) if lats else 0.0


def attack_report(
    kind: AttackKind,
    switches: list[SwitchNode],
    controller: Controller,
    sources: Optional[list[FloodSource]] = None,
    injectors: Optional[list[MitmInjector]] = None,
    legit_keys: Optional[list[FlowKey]] = None,
) -> AttackReport:
    """Reconcile an attack's outcome against dataplane/controlplane counters."""
    report = AttackReport(kind)
    report.attack_pkts_sent = sum(s.sent for s in sources or [])
    report.table_full_rejections = sum(
        sw.counters.table_full_rejections for sw in switches
    )
    report.controller_queue_drops = controller.counters.packet_ins_dropped_queue_full
    report.injected_attempted = sum(i.attempted for i in injectors or [])
    report.injected_accepted = sum(i.accepted for i in injectors or [])

    legit_keys = legit_keys or []
    report.legit_setups_attempted = len(legit_keys)
    attacker_srcs = {s.spec.attacker for s in sources or []}
    for sw in switches:
        report.legit_setup_latencies_us.extend(
            lat for src, lat in sw.setup_latencies if src not in attacker_srcs
        )
    for key in legit_keys:
        if any(sw.table.match_packet(key) is not None for sw in switches):
            report.legit_setups_completed += 1
    return report
