"""Builds a live simulation from a Scenario and renders the metrics CSV set.

All outputs are rendered in memory after the event loop finishes and only
then written to disk, so a failed run leaves no partial files.
"""

import os
from dataclasses import dataclass, field, fields
from typing import Optional

from .attacks import AttackKind, AttackReport, AttackSpec, FloodSource, MitmInjector, attack_report
from .cogengine import CognitiveEngineApp, Demand
from .controlplane import Controller, HelloMsg, L2ForwardingApp, StatsRequestCmd
from .dataplane import NodeKind, Packet, SwitchNode, WiredPort
from .flowcore import FlowKey, TrafficClass
from .mobility import (
    AccessPort,
    Attachment,
    AttachmentRegistry,
    HandoverMode,
    MihEvent,
    MihKind,
    MobilityManager,
    RatKind,
    timeline_rows,
)
from .radio import RadioEnvironment
from .scenario import (
    ALL_CHANNELS,
    Scenario,
    ValidationError,
    validate_scenario,
)
from .secchannel import (
    ControlSession,
    Scheme,
    SessionState,
    establish,
    mark_established,
    on_ip_change,
)
from .simkernel import Engine, RunSummary, SimTime, s_to_us, us_to_s
from .traffic_metrics import (
    BsRadio,
    BulkFlowSpec,
    BulkSource,
    Host,
    MetricsStore,
    ProbeFlow,
    ProbeSpec,
    VoipCall,
    VoipCallSpec,
    flow_sig,
)

STATS_POLL_US = 500_000
_MODES = {"proactive": HandoverMode.PROACTIVE, "reactive": HandoverMode.REACTIVE}


class InvariantViolation(Exception):
    """A post-run consistency check failed; the run's outputs are suspect."""


@dataclass
class RunResult:
    scenario: Scenario
    engine: Engine
    store: MetricsStore
    controller: Controller
    switches: dict[str, SwitchNode]
    hosts: dict[str, Host]
    sessions: dict[str, ControlSession]
    radio_env: RadioEnvironment
    bs_radios: dict[str, BsRadio]
    cogengine: Optional[CognitiveEngineApp]
    mobility_mgr: Optional[MobilityManager]
    registry: Optional[AttachmentRegistry]
    flood_sources: list[FloodSource]
    injectors: list[MitmInjector]
    traffic_keys: list[FlowKey]
    ue_flows: dict[str, list[FlowKey]]
    bench: dict[str, list[SimTime]]
    duration_us: SimTime
    mode_label: str
    summary: RunSummary

    def attack_reports(self) -> list[AttackReport]:
        """One reconciled report per attack kind present in the scenario."""
        attacker_srcs = {s.spec.attacker for s in self.flood_sources}
        legit = [k for k in self.traffic_keys if k.src_node not in attacker_srcs]
        kinds: list[AttackKind] = []
        for src in self.flood_sources:
            if src.spec.kind not in kinds:
                kinds.append(src.spec.kind)
        if self.injectors and AttackKind.MITM_INJECT not in kinds:
            kinds.append(AttackKind.MITM_INJECT)
        reports = []
        for kind in kinds:
            reports.append(attack_report(
                kind,
                [self.switches[k] for k in sorted(self.switches)],
                self.controller,
                sources=[s for s in self.flood_sources if s.spec.kind is kind],
                injectors=self.injectors if kind is AttackKind.MITM_INJECT else [],
                legit_keys=legit,
            ))
        return reports


def _build_traffic(scn: Scenario, engine: Engine, store: MetricsStore,
                   hosts: dict[str, Host]) -> list[FlowKey]:
    keys: list[FlowKey] = []
    for i, b in enumerate(scn.bulks):
        spec = BulkFlowSpec(
            b.src, b.dst, b.rate_Bps, b.packet_bytes,
            start_us=s_to_us(b.start_s), stop_us=s_to_us(b.stop_s),
        )
        BulkSource(engine, hosts[b.src], spec, idx=i)
        keys.append(spec.key())
    call_id = 1
    for v in scn.voips:
        for rep in range(v.calls):
            start_s = v.start_s + rep * (v.duration_s + v.gap_s)
            spec = VoipCallSpec(
                v.src, v.dst,
                start_us=s_to_us(start_s),
                duration_us=s_to_us(v.duration_s),
                call_id=call_id,
                interval_us=v.interval_ms * 1_000,
                payload_bytes=v.payload_bytes,
                rtt_threshold_us=v.threshold_ms * 1_000,
            )
            VoipCall(engine, hosts[v.src], store, spec)
            keys.append(spec.key())
            call_id += 1
    for i, p in enumerate(scn.probes, start=1):
        spec = ProbeSpec(
            p.src, p.dst, probe_id=i,
            interval_us=p.interval_ms * 1_000,
            size_bytes=p.size_bytes,
            start_us=s_to_us(p.start_s),
            stop_us=s_to_us(p.stop_s),
        )
        ProbeFlow(engine, hosts[p.src], store, spec)
        keys.append(spec.key())
    return keys


def _run_bench(scn: Scenario, engine: Engine) -> dict[str, list[SimTime]]:
    """Handshake delay samples per scheme, independent of the event loop."""
    bench: dict[str, list[SimTime]] = {}
    if scn.secchan.establishments <= 0:
        return bench
    for scheme in (Scheme.PLAIN, Scheme.TLS_LIKE, Scheme.HIP_BEX):
        rng = engine.rng_for(f"bench.{scheme.value}")
        samples = []
        for _ in range(scn.secchan.establishments):
            sess = ControlSession(scheme, "bench")
            samples.append(establish(sess, scn.control.rtt_us, rng))
        bench[scheme.value] = samples
    return bench


def execute_scenario(
    scn: Scenario,
    mobility_mode: Optional[HandoverMode] = None,
    seed_override: Optional[int] = None,
) -> RunResult:
    problems = validate_scenario(scn)
    if problems:
        raise ValidationError("; ".join(problems))

    seed = scn.meta.seed if seed_override is None else seed_override
    engine = Engine(seed=seed)
    store = MetricsStore()
    duration_us = s_to_us(scn.meta.duration_s)

    env = RadioEnvironment(engine, scn.radio.n_channels, scn.radio.capacity_Bps)
    for p in scn.primaries:
        chans = range(scn.radio.n_channels) if p.channel == ALL_CHANNELS else [p.channel]
        for ch in chans:
            env.attach_primary(ch, s_to_us(p.mean_on_s), s_to_us(p.mean_off_s))
    env.start()

    controller = Controller(
        engine, "ctrl",
        budget_per_interval=scn.control.budget_per_interval,
        interval_us=scn.control.interval_us,
        queue_bound=scn.control.queue_bound,
    )
    if scn.apps.l2fwd:
        controller.register_app(
            L2ForwardingApp(idle_timeout_us=s_to_us(scn.apps.l2fwd_idle_s)), priority=0)
    cogeng: Optional[CognitiveEngineApp] = None
    if scn.apps.cogengine:
        cogeng = CognitiveEngineApp(
            controller, env,
            epoch_us=scn.apps.ce_epoch_ms * 1_000,
            p_miss=scn.apps.ce_pmiss,
            p_fa=scn.apps.ce_pfa,
        )
        controller.register_app(cogeng, priority=50)
        cogeng.start()
    controller.start()

    # -- nodes -----------------------------------------------------------
    switches: dict[str, SwitchNode] = {}
    sessions: dict[str, ControlSession] = {}

    def record_drop(pkt: Packet, reason: str) -> None:
        store.record_loss(pkt.key, reason, pkt.size_bytes, now=engine.now)

    for i, node in enumerate(scn.switches()):
        sw = SwitchNode(
            engine, node.id, NodeKind(node.kind.value),
            table_capacity=node.table_capacity,
            buffer_capacity=node.buffer_capacity,
        )
        sw.drop_hook = record_drop
        if scn.apps.expiry:
            sw.start_expiry_ticks()
        sess = ControlSession(scn.scheme_for(node.id), node.ip or f"10.0.0.{i + 1}")
        delay = establish(sess, scn.control.rtt_us, engine.rng_for(f"secchan.{node.id}"))
        engine.schedule(delay, "runner.sessions", "up", node.id)
        sw.set_control(sess, scn.control.rtt_us)
        controller.attach_switch(node.id, sess, scn.control.rtt_us)
        switches[node.id] = sw
        sessions[node.id] = sess

    hosts = {h: Host(engine, h, store) for h in scn.hosts()}
    mobility_ues = {a.ue for a in scn.attachments}

    # -- wiring ------------------------------------------------------------
    next_port: dict[str, int] = {k: 1 for k in switches}
    wires: dict[str, list[tuple[int, str, SimTime]]] = {k: [] for k in switches}
    hosted: dict[str, list[tuple[str, int]]] = {k: [] for k in switches}

    def alloc(sw_id: str) -> int:
        port = next_port[sw_id]
        next_port[sw_id] = port + 1
        return port

    for lk in scn.links:
        if lk.a in switches and lk.b in switches:
            pa, pb = alloc(lk.a), alloc(lk.b)
            switches[lk.a].attach_port(pa, WiredPort(engine, lk.latency_us, lk.b))
            switches[lk.b].attach_port(pb, WiredPort(engine, lk.latency_us, lk.a))
            wires[lk.a].append((pa, lk.b, lk.latency_us))
            wires[lk.b].append((pb, lk.a, lk.latency_us))
        else:
            host_id, sw_id = (lk.a, lk.b) if lk.a in hosts else (lk.b, lk.a)
            port = alloc(sw_id)
            switches[sw_id].attach_port(port, WiredPort(engine, lk.latency_us, host_id))
            if host_id not in mobility_ues:
                hosted[sw_id].append((host_id, port))
            if hosts[host_id].uplink is None:
                hosts[host_id].attach_uplink(WiredPort(engine, lk.latency_us, sw_id))

    bs_radios: dict[str, BsRadio] = {}
    radio_port_of: dict[tuple[str, str], int] = {}
    for rc in scn.radio_clients:
        bsr = bs_radios.get(rc.bs)
        if bsr is None:
            bsr = BsRadio(engine, env, rc.bs, store,
                          overhead=scn.radio.overhead, queue_cap=scn.radio.queue_cap)
            bs_radios[rc.bs] = bsr
            switches[rc.bs].set_channel_hook = bsr.assign
        radio_port = bsr.add_client(rc.client, rc.client)
        port = alloc(rc.bs)
        switches[rc.bs].attach_port(port, radio_port)
        radio_port_of[(rc.bs, rc.client)] = port
        if rc.client not in mobility_ues:
            hosted[rc.bs].append((rc.client, port))
        if hosts[rc.client].uplink is None:
            hosts[rc.client].attach_uplink(
                WiredPort(engine, rc.uplink_latency_us, rc.bs))
        if rc.channels is not None:
            bsr.assign(rc.client, frozenset(rc.channels))

    registry: Optional[AttachmentRegistry] = None
    if scn.attachments:
        registry = AttachmentRegistry()
        for a in scn.attachments:
            port = radio_port_of.get((a.ap, a.ue))
            if port is None:
                port = alloc(a.ap)
                switches[a.ap].attach_port(
                    port,
                    AccessPort(engine, a.access_latency_us, a.ue, a.ap, registry, store),
                )
            registry.add(a.ue, Attachment(
                a.ap, RatKind(a.rat), a.advertised_rate_Bps, port, attached=a.attached))
            if a.attached:
                hosted[a.ap].append((a.ue, port))
                if hosts[a.ue].uplink is None:
                    hosts[a.ue].attach_uplink(
                        WiredPort(engine, a.access_latency_us, a.ap))

    for node in scn.switches():
        engine.schedule(0, "ctrl", "hello", HelloMsg(
            from_node=node.id, kind=node.kind.value,
            wires=wires[node.id], hosts=hosted[node.id]))

    if cogeng is not None:
        for rc in scn.radio_clients:
            cogeng.manage_client(rc.client, rc.bs)
        for d in scn.demands:
            cogeng.add_demand(Demand(d.node, TrafficClass(d.traffic_class),
                                     d.rate_Bps, d.peer))

    # -- traffic, mobility, attacks ----------------------------------------
    traffic_keys = _build_traffic(scn, engine, store, hosts)

    mobility_mgr: Optional[MobilityManager] = None
    mode = mobility_mode
    if mode is None and scn.apps.mobility in _MODES:
        mode = _MODES[scn.apps.mobility]
    if mode is None and scn.apps.mobility == "compare":
        mode = HandoverMode.PROACTIVE
    ue_flows: dict[str, list[FlowKey]] = {}
    if mode is not None and registry is not None:
        mobility_mgr = MobilityManager(
            engine, controller, registry, store, mode,
            d_detect_us=scn.apps.d_detect_ms * 1_000,
            control_rtt_us=scn.control.rtt_us,
        )
        for ue in sorted(mobility_ues):
            ue_flows[ue] = [k for k in traffic_keys if k.dst_node == ue]
            for key in ue_flows[ue]:
                mobility_mgr.register_ue_flow(ue, key)
        mobility_mgr.schedule([
            MihEvent(MihKind(m.kind), m.ue, RatKind(m.rat),
                     at_us=s_to_us(m.at_s), lead_time_us=s_to_us(m.lead_s))
            for m in scn.mih_events
        ])

    flood_sources: list[FloodSource] = []
    injectors: list[MitmInjector] = []
    for i, atk in enumerate(scn.attacks):
        spec = AttackSpec(
            AttackKind(atk.kind),
            rate_per_s=atk.rate_per_s if atk.rate_per_s > 0 else 1.0,
            start_us=s_to_us(atk.start_s), stop_us=s_to_us(atk.stop_s),
            target=atk.target, attacker=atk.attacker or "attacker",
            victim_dst=atk.victim_dst, victim_src=atk.victim_src,
        )
        if spec.kind is AttackKind.MITM_INJECT:
            injectors.append(MitmInjector(engine, switches[atk.target], spec))
        else:
            flood_sources.append(FloodSource(engine, hosts[atk.attacker], spec, idx=i))

    # -- session lifecycle (bring-up, ip changes) ---------------------------
    def on_session_event(ev) -> None:
        now = engine.now
        if ev.kind == "up":
            mark_established(sessions[ev.payload], now)
        elif ev.kind == "ip_change":
            node_id, new_ip = ev.payload
            sess = sessions[node_id]
            if sess.state is SessionState.ESTABLISHED:
                outcome = on_ip_change(sess, new_ip, now)
                if outcome.value == "torn_down":
                    delay = establish(
                        sess, scn.control.rtt_us, engine.rng_for(f"secchan.{node_id}"))
                    engine.schedule(now + delay, "runner.sessions", "up", node_id)

    engine.register("runner.sessions", on_session_event)
    for ch in scn.ip_changes:
        engine.schedule(s_to_us(ch.at_s), "runner.sessions", "ip_change",
                        (ch.node, ch.new_ip))

    # periodic stats polling gives the control channel steady traffic, so a
    # torn-down session visibly loses commands
    def on_poll(ev) -> None:
        for node_id in sorted(controller.sessions):
            controller.send_command(StatsRequestCmd(node_id))
        if engine.now + STATS_POLL_US <= duration_us:
            engine.schedule_in(STATS_POLL_US, "runner.polls", "poll", None)

    engine.register("runner.polls", on_poll)
    if duration_us >= STATS_POLL_US:
        engine.schedule(STATS_POLL_US // 2, "runner.polls", "poll", None)

    bench = _run_bench(scn, engine)
    summary = engine.run_until(duration_us)

    for sig, in_flight in store.conservation_report():
        if in_flight < 0:
            raise InvariantViolation(
                f"flow {sig}: delivered+lost exceeds sent by {-in_flight} packets")

    mode_label = mode.value if mode is not None else "static"
    return RunResult(
        scenario=scn, engine=engine, store=store, controller=controller,
        switches=switches, hosts=hosts, sessions=sessions, radio_env=env,
        bs_radios=bs_radios, cogengine=cogeng, mobility_mgr=mobility_mgr,
        registry=registry,
        flood_sources=flood_sources, injectors=injectors,
        traffic_keys=traffic_keys, ue_flows=ue_flows, bench=bench,
        duration_us=duration_us, mode_label=mode_label, summary=summary,
    )


# -- CSV rendering -------------------------------------------------------------

def _csv(header: list[str], rows: list[list]) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def _cell(v) -> str:
    if isinstance(v, float):
        return format(v, ".6g")
    return str(v)


def render_outputs(scn: Scenario, runs: list[RunResult]) -> dict[str, str]:
    """Renders every metrics file for a finished run set, keyed by filename."""
    r = runs[0]
    store = r.store
    out: dict[str, str] = {}
    sigs = sorted(store.totals)

    rows = []
    for sig in sigs:
        for t, bps in store.measure_throughput(sig, t_end=r.duration_us):
            rows.append([us_to_s(t), sig, bps])
    out["throughput.csv"] = _csv(["time_s", "flow", "throughput_Bps"], rows)

    out["rtt.csv"] = _csv(
        ["time_s", "flow", "rtt_us", "kind"],
        [[us_to_s(t), sig, rtt, tag] for t, sig, rtt, tag in store.rtt_samples])

    out["calls.csv"] = _csv(
        ["call_id", "src", "dst", "state", "started_s", "ended_s", "drop_rtt_us"],
        [[cid, c.src, c.dst, c.state.value, us_to_s(c.started_us),
          us_to_s(c.ended_us), c.drop_rtt_us]
         for cid, c in sorted(store.calls.items())])

    out["call_rate.csv"] = _csv(
        ["time_s", "completed_per_s"],
        [[us_to_s(t), rate] for t, rate in store.call_rate(s_to_us(1.0), r.duration_us)])

    out["flows.csv"] = _csv(
        ["flow", "sent_pkts", "sent_bytes", "delivered_pkts", "delivered_bytes",
         "lost_pkts", "lost_bytes"],
        [[sig, tot.sent_pkts, tot.sent_bytes, tot.delivered_pkts,
          tot.delivered_bytes, tot.lost_pkts, tot.lost_bytes]
         for sig, tot in sorted(store.totals.items())])

    out["losses.csv"] = _csv(
        ["time_s", "flow", "reason", "bytes"],
        [[us_to_s(t), sig, reason, nbytes] for t, sig, reason, nbytes in store.losses])

    counter_names = [f.name for f in fields(next(iter(r.switches.values())).counters)] \
        if r.switches else []
    out["switches.csv"] = _csv(
        ["node", "kind", "table_rules", "table_capacity"] + counter_names,
        [[node_id, sw.kind.value, len(sw.table), sw.table.capacity]
         + [getattr(sw.counters, n) for n in counter_names]
         for node_id, sw in sorted(r.switches.items())])

    out["controller.csv"] = _csv(
        ["counter", "value"],
        [[f.name, getattr(r.controller.counters, f.name)]
         for f in fields(r.controller.counters)])

    out["control_log.csv"] = _csv(
        ["time_s", "node", "kind", "outcome"],
        [[us_to_s(rec.t_us), rec.node, rec.kind, rec.outcome]
         for rec in r.controller.log])

    out["channels.csv"] = _csv(
        ["time_s", "channel", "primary_on"],
        [[us_to_s(t), ch, int(on)] for t, ch, on in r.radio_env.occupancy_log])

    decision_rows = []
    for run in runs:
        if run.cogengine is not None:
            decision_rows += [[us_to_s(d.t_us), d.plan_digest, d.violations,
                               d.commands] for d in run.cogengine.decision_log]
    out["decisions.csv"] = _csv(
        ["time_s", "plan_digest", "violations", "commands"], decision_rows)

    cmd_failures = {node: 0 for node in r.sessions}
    for rec in r.controller.log:
        if rec.outcome == "session_down" and rec.node in cmd_failures:
            cmd_failures[rec.node] += 1
    out["sessions.csv"] = _csv(
        ["node", "scheme", "ip", "state", "handshakes_begun", "reestablishments",
         "mobility_updates", "signaling_count", "commands_lost"],
        [[node, s.scheme.value, s.endpoint_ip, s.state.value, s.handshakes_begun,
          s.reestablishments, s.mobility_updates, s.signaling_count,
          cmd_failures[node]]
         for node, s in sorted(r.sessions.items())])

    out["establish_delays.csv"] = _csv(
        ["scheme", "sample", "delay_us"],
        [[scheme, i, d]
         for scheme in sorted(r.bench)
         for i, d in enumerate(r.bench[scheme])])

    mob_rows = []
    ho_rows = []
    for run in runs:
        flows = [k for keys in run.ue_flows.values() for k in keys]
        if flows and run.mobility_mgr is not None:
            mob_rows += [list(row) for row in timeline_rows(
                run.store, flows, run.duration_us, run.mode_label)]
            ho_rows += [[us_to_s(h.t_us), run.mode_label, h.ue, h.from_ap, h.to_ap,
                         h.latency_us] for h in run.mobility_mgr.handover_log]
    out["mobility.csv"] = _csv(
        ["time_s", "scheme", "throughput_Bps", "cum_loss_pkts"], mob_rows)
    out["handovers.csv"] = _csv(
        ["time_s", "scheme", "ue", "from_ap", "to_ap", "latency_us"], ho_rows)

    out["attacks.csv"] = _csv(
        ["kind", "attack_pkts_sent", "table_full_rejections",
         "controller_queue_drops", "legit_setups_attempted",
         "legit_setups_completed", "legit_setup_failures",
         "injected_attempted", "injected_accepted", "mean_legit_latency_us"],
        [[rep.kind.value, rep.attack_pkts_sent, rep.table_full_rejections,
          rep.controller_queue_drops, rep.legit_setups_attempted,
          rep.legit_setups_completed, rep.legit_setup_failures,
          rep.injected_attempted, rep.injected_accepted,
          rep.mean_legit_latency_us()]
         for rep in r.attack_reports()])

    out["setup_latency.csv"] = _csv(
        ["node", "src", "latency_us"],
        [[node_id, src, lat]
         for node_id, sw in sorted(r.switches.items())
         for src, lat in sw.setup_latencies])

    out["digest.txt"] = "".join(
        f"{run.mode_label} {run.summary.trace_digest} "
        f"events={run.summary.events_processed}\n"
        for run in runs)
    return out


def execute_all(scn: Scenario,
                seed_override: Optional[int] = None) -> list[RunResult]:
    """Every run the scenario calls for: compare mode yields two, else one."""
    if scn.apps.mobility == "compare":
        return [
            execute_scenario(scn, HandoverMode.PROACTIVE, seed_override),
            execute_scenario(scn, HandoverMode.REACTIVE, seed_override),
        ]
    return [execute_scenario(scn, None, seed_override)]


def run_scenario(scn: Scenario, out_dir: str,
                 seed_override: Optional[int] = None) -> list[str]:
    """Executes a scenario and writes the full CSV set; returns written paths."""
    problems = validate_scenario(scn)
    if problems:
        raise ValidationError("; ".join(problems))
    runs = execute_all(scn, seed_override)
    outputs = render_outputs(scn, runs)
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name in sorted(outputs):
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(outputs[name])
        written.append(path)
    return written


def scenario_digest(scn: Scenario, seed_override: Optional[int] = None) -> str:
    """Runs the scenario without writing anything; returns the trace digest."""
    if scn.apps.mobility == "compare":
        result = execute_scenario(scn, HandoverMode.PROACTIVE, seed_override)
    else:
        result = execute_scenario(scn, None, seed_override)
    return result.summary.trace_digest
