"""Inter-RAT handover driven by link-layer intelligence events.

Two schemes are implemented over the same event schedule. The proactive
scheme reacts to LINK_GOING_DOWN: it attaches the terminal to the target
RAT while the old link is still up (make-before-break) and pre-installs
the redirected forwarding path, so the switchover loses nothing. The
reactive scheme ignores the early warning; after LINK_DOWN it spends a
fixed detection delay before re-attaching and then pays a control round
trip to get new rules installed, losing the packets sent in the gap.
"""

import enum
from dataclasses import dataclass, field
from typing import Optional

from .controlplane import Controller, FlowModCmd
from .dataplane import Packet, PortSink
from .flowcore import FlowAction, FlowKey, MatchPattern, RuleSpec
from .simkernel import Engine, SimTime, US_PER_S
from .traffic_metrics import MetricsStore, flow_sig

D_DETECT_US_DEFAULT = 300_000
LEAD_TIME_US_DEFAULT = 500_000


class RatKind(enum.Enum):
    WLAN = "wlan"
    COGNITIVE_BS = "cognitive_bs"
    WIRED = "wired"


_RAT_ORDER = {RatKind.WLAN: 0, RatKind.COGNITIVE_BS: 1, RatKind.WIRED: 2}


class MihKind(enum.Enum):
    LINK_GOING_DOWN = "link_going_down"
    LINK_DOWN = "link_down"
    LINK_UP = "link_up"


class HandoverMode(enum.Enum):
    PROACTIVE = "proactive"
    REACTIVE = "reactive"


class NoCandidateRat(Exception):
    """No alternative RAT is in range for the terminal."""


@dataclass(frozen=True)
class MihEvent:
    kind: MihKind
    node: str
    rat: RatKind
    at_us: SimTime
    lead_time_us: SimTime = 0


@dataclass
class Attachment:
    ap_id: str
    rat: RatKind
    advertised_rate_Bps: float
    access_port: int
    attached: bool = False


class AttachmentRegistry:
    """Which terminals are currently associated with which access points."""

    def __init__(self):
        self._by_ue: dict[str, dict[str, Attachment]] = {}

    def add(self, ue: str, att: Attachment) -> None:
        self._by_ue.setdefault(ue, {})[att.ap_id] = att

    def attach(self, ue: str, ap_id: str) -> None:
        self._by_ue[ue][ap_id].attached = True

    def detach(self, ue: str, ap_id: str) -> None:
        self._by_ue[ue][ap_id].attached = False

    def is_attached(self, ue: str, ap_id: str) -> bool:
        att = self._by_ue.get(ue, {}).get(ap_id)
        return att is not None and att.attached

    def attachments(self, ue: str) -> list[Attachment]:
        return [self._by_ue[ue][k] for k in sorted(self._by_ue.get(ue, {}))]

    def for_rat(self, ue: str, rat: RatKind) -> Optional[Attachment]:
        for att in self.attachments(ue):
            if att.rat is rat:
                return att
        return None


class AccessPort(PortSink):
    """Last-hop delivery that only reaches an associated terminal.

    A packet forwarded to an access point the terminal has left is lost;
    that loss is exactly what the handover schemes differ on.
    """

    def __init__(
        self,
        engine: Engine,
        latency_us: SimTime,
        ue_target: str,
        ap_id: str,
        registry: AttachmentRegistry,
        store: MetricsStore,
    ):
        self.engine = engine
        self.latency_us = latency_us
        self.ue_target = ue_target
        self.ap_id = ap_id
        self.registry = registry
        self.store = store

    def send(self, pkt: Packet) -> None:
        if self.registry.is_attached(pkt.key.dst_node, self.ap_id):
            self.engine.schedule_in(self.latency_us, self.ue_target, "ingress", pkt)
        else:
            self.store.record_loss(pkt.key, "link_down", pkt.size_bytes, self.engine.now)


@dataclass
class HandoverPlan:
    ue: str
    from_rat: RatKind
    to_rat: RatKind
    target_ap: str
    pre_install: list[FlowModCmd]
    switchover_at: SimTime


@dataclass
class HandoverRecord:
    t_us: SimTime
    ue: str
    from_ap: str
    to_ap: str
    latency_us: SimTime
    mode: HandoverMode


class MobilityManager:
    """Consumes MIH events, moves attachments, and redirects flows.

    Rule installs go through the controller command path so they are
    subject to the control channel like any other flow-mod.
    """

    TARGET = "mih.mgr"

    def __init__(
        self,
        engine: Engine,
        controller: Controller,
        registry: AttachmentRegistry,
        store: MetricsStore,
        mode: HandoverMode,
        d_detect_us: SimTime = D_DETECT_US_DEFAULT,
        control_rtt_us: SimTime = 10_000,
        rule_priority: int = 10,
    ):
        self.engine = engine
        self.controller = controller
        self.registry = registry
        self.store = store
        self.mode = mode
        self.d_detect_us = d_detect_us
        self.control_rtt_us = control_rtt_us
        self.rule_priority = rule_priority
        self.flows: dict[str, list[FlowKey]] = {}
        self.handover_log: list[HandoverRecord] = []
        self.plans: list[HandoverPlan] = []
        engine.register(self.TARGET, self._on_event)

    # -- wiring --------------------------------------------------------------

    def register_ue_flow(self, ue: str, key: FlowKey) -> None:
        self.flows.setdefault(ue, []).append(key)

    def schedule(self, events: list[MihEvent]) -> None:
        for ev in sorted(events, key=lambda e: (e.at_us, e.kind.value, e.node)):
            self.engine.schedule(ev.at_us, self.TARGET, "mih", ev)

    # -- planning --------------------------------------------------------------

    def best_candidate(self, ue: str, exclude_rat: RatKind) -> Attachment:
        cands = [a for a in self.registry.attachments(ue) if a.rat is not exclude_rat]
        if not cands:
            raise NoCandidateRat(f"{ue}: no RAT besides {exclude_rat.value} in range")
        cands.sort(key=lambda a: (-a.advertised_rate_Bps, _RAT_ORDER[a.rat], a.ap_id))
        return cands[0]

    def build_plan(self, ev: MihEvent, now: SimTime) -> HandoverPlan:
        target = self.best_candidate(ev.node, exclude_rat=ev.rat)
        cmds: list[FlowModCmd] = []
        keys = sorted(
            self.flows.get(ev.node, ()),
            key=lambda k: (k.src_node, k.traffic_class.value, str(k.port_hint)),
        )
        for key in keys:
            cmds.extend(self._path_cmds(key, target))
        return HandoverPlan(ev.node, ev.rat, target.rat, target.ap_id, cmds, now)

    def _path_cmds(self, key: FlowKey, target: Attachment) -> list[FlowModCmd]:
        """Redirect rules from the flow's source switch to the target AP."""
        view = self.controller.view
        cmds = []
        here = view.host_at.get(key.src_node, (None, 0))[0]
        hops = 0
        while here is not None and here != target.ap_id and hops < 16:
            port = view.port_toward(here, target.ap_id)
            if port is None:
                break
            cmds.append(FlowModCmd(here, RuleSpec(
                MatchPattern.exact(key), FlowAction.forward(port), self.rule_priority
            )))
            here = view.wires[(here, port)][0]
            hops += 1
        cmds.append(FlowModCmd(target.ap_id, RuleSpec(
            MatchPattern.exact(key), FlowAction.forward(target.access_port),
            self.rule_priority,
        )))
        return cmds

    # -- event handling ------------------------------------------------------------

    def on_mih_event(self, ev: MihEvent) -> Optional[HandoverPlan]:
        now = self.engine.now
        if ev.kind is MihKind.LINK_UP:
            att = self.registry.for_rat(ev.node, ev.rat)
            if att is not None:
                self.registry.attach(ev.node, att.ap_id)
            return None

        from_att = self.registry.for_rat(ev.node, ev.rat)
        if from_att is None:
            return None

        if self.mode is HandoverMode.PROACTIVE:
            if ev.kind is MihKind.LINK_GOING_DOWN:
                plan = self.build_plan(ev, now)
                # make-before-break: associate with the target while the
                # old link is still up, then steer traffic over
                self.registry.attach(ev.node, plan.target_ap)
                for cmd in plan.pre_install:
                    self.controller.send_command(cmd)
                self.plans.append(plan)
                self.handover_log.append(HandoverRecord(
                    now, ev.node, from_att.ap_id, plan.target_ap,
                    self.control_rtt_us // 2, self.mode,
                ))
                return plan
            if ev.kind is MihKind.LINK_DOWN:
                self.registry.detach(ev.node, from_att.ap_id)
            return None

        # reactive: the early warning is not acted upon
        if ev.kind is MihKind.LINK_DOWN:
            self.registry.detach(ev.node, from_att.ap_id)
            self.engine.schedule_in(self.d_detect_us, self.TARGET, "detect", ev)
        return None

    def _on_detect(self, ev: MihEvent) -> None:
        now = self.engine.now
        plan = self.build_plan(ev, now)
        self.registry.attach(ev.node, plan.target_ap)
        # new-flow signaling: packet-in up, then flow-mods down
        self.engine.schedule_in(self.control_rtt_us // 2, self.TARGET, "apply", plan)
        from_att = self.registry.for_rat(ev.node, ev.rat)
        self.handover_log.append(HandoverRecord(
            ev.at_us, ev.node, from_att.ap_id if from_att else "?", plan.target_ap,
            self.d_detect_us + self.control_rtt_us, self.mode,
        ))

    def _on_event(self, engine_ev) -> None:
        if engine_ev.kind == "mih":
            self.on_mih_event(engine_ev.payload)
        elif engine_ev.kind == "detect":
            self._on_detect(engine_ev.payload)
        elif engine_ev.kind == "apply":
            plan: HandoverPlan = engine_ev.payload
            for cmd in plan.pre_install:
                self.controller.send_command(cmd)
            self.plans.append(plan)


# -- reporting ------------------------------------------------------------------

@dataclass
class MobilityReport:
    """Per-second timeline rows (time_s, scheme, throughput_Bps, cum_loss_pkts)
    plus totals, for a proactive/reactive pair over one event schedule."""

    rows: list[tuple[float, str, float, int]] = field(default_factory=list)
    loss_pkts: dict[str, int] = field(default_factory=dict)
    handovers: dict[str, list[HandoverRecord]] = field(default_factory=dict)

    def total_loss(self, scheme: str) -> int:
        return self.loss_pkts.get(scheme, 0)


def timeline_rows(
    store: MetricsStore,
    flows: list[FlowKey],
    duration_us: SimTime,
    scheme: str,
    window_us: SimTime = US_PER_S,
) -> list[tuple[float, str, float, int]]:
    sigs = {flow_sig(k) for k in flows}
    n = duration_us // window_us
    delivered = [0] * n
    lost = [0] * n
    for t, sig, nbytes in store.deliveries:
        if sig in sigs and t < duration_us:
            delivered[t // window_us] += nbytes
    for t, sig, _reason, _nbytes in store.losses:
        if sig in sigs and t < duration_us:
            lost[t // window_us] += 1
    rows = []
    cum = 0
    scale = US_PER_S / window_us
    for i in range(n):
        cum += lost[i]
        rows.append((i * window_us / US_PER_S, scheme, delivered[i] * scale, cum))
    return rows


def expected_reactive_loss_pkts(
    rate_pkts_per_s: float, d_detect_us: SimTime, control_rtt_us: SimTime
) -> float:
    """Analytic estimate: packets emitted while the path is dark."""
    gap_s = (d_detect_us + control_rtt_us) / US_PER_S
    return rate_pkts_per_s * gap_s


def compare_schemes(scenario) -> MobilityReport:
    """Run one scenario under both schemes with the same seed and schedule."""
    from .runner import execute_scenario  # local import, runner builds on this module

    report = MobilityReport()
    for mode in (HandoverMode.PROACTIVE, HandoverMode.REACTIVE):
        result = execute_scenario(scenario, mobility_mode=mode)
        ue_flows = [k for keys in result.ue_flows.values() for k in keys]
        rows = timeline_rows(
            result.store, ue_flows, result.duration_us, mode.value
        )
        report.rows.extend(rows)
        report.loss_pkts[mode.value] = sum(
            result.store.totals[flow_sig(k)].lost_pkts
            for k in ue_flows if flow_sig(k) in result.store.totals
        )
        mgr = result.mobility_mgr
        report.handovers[mode.value] = list(mgr.handover_log) if mgr else []
    return report
