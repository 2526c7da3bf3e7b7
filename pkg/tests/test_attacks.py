"""Attack model tests with counter-reconciliation oracles.

Table exhaustion is checked against exact install arithmetic, controller
saturation against a paired no-attack baseline, and rule injection
against the control channel's security posture.
"""

import pytest

from cognet.attacks import (
    AttackKind,
    AttackReport,
    AttackSpec,
    FloodSource,
    MitmInjector,
    attack_report,
)
from cognet.controlplane import Controller, HelloMsg, L2ForwardingApp
from cognet.dataplane import NodeKind, Packet, SwitchNode, WiredPort
from cognet.flowcore import ActionKind, FlowKey, TrafficClass
from cognet.secchannel import ControlSession, Scheme, mark_established
from cognet.simkernel import Engine
from cognet.traffic_metrics import BulkFlowSpec, BulkSource, Host, MetricsStore, flow_sig

LEGIT_KEY = FlowKey("hA", "hB", TrafficClass.BULK, None)


def build_net(table_capacity=32, budget=200, queue_bound=1000, scheme=Scheme.PLAIN,
              buffer_capacity=256):
    eng = Engine(seed=13)
    store = MetricsStore()
    ctrl = Controller(eng, budget_per_interval=budget, queue_bound=queue_bound)
    ctrl.start()
    ctrl.register_app(L2ForwardingApp(), priority=0)
    sw = SwitchNode(eng, "s1", table_capacity=table_capacity,
                    buffer_capacity=buffer_capacity)
    sess = ControlSession(scheme, "10.0.0.1")
    mark_established(sess, 0)
    sw.set_control(sess, 10_000)
    ctrl.attach_switch("s1", sess, 10_000)
    hosts = {}
    for name, port in (("hA", 1), ("hB", 2), ("attacker", 3)):
        h = Host(eng, name, store)
        h.attach_uplink(WiredPort(eng, 1_000, "s1"))
        sw.attach_port(port, WiredPort(eng, 1_000, name))
        hosts[name] = h
    ctrl.view.absorb_hello(HelloMsg(
        "s1", NodeKind.WIRED_SWITCH, wires=[],
        hosts=[("hA", 1), ("hB", 2), ("attacker", 3)]))
    return eng, store, ctrl, sw, hosts


def flood_spec(kind, rate, start, stop):
    return AttackSpec(kind, rate, start, stop, target="s1",
                      attacker="attacker", victim_dst="hB")


class TestSpecValidation:
    def test_nonpositive_flood_rate_rejected(self):
        with pytest.raises(ValueError):
            AttackSpec(AttackKind.TABLE_FLOOD, 0, 0, 1, "s1", victim_dst="hB")

    def test_stop_before_start_rejected(self):
        with pytest.raises(ValueError):
            AttackSpec(AttackKind.TABLE_FLOOD, 10, 5_000, 1_000, "s1")

    def test_flood_requires_destination(self):
        eng, store, ctrl, sw, hosts = build_net()
        bad = AttackSpec(AttackKind.TABLE_FLOOD, 10, 0, 1_000, "s1")
        with pytest.raises(ValueError):
            FloodSource(eng, hosts["attacker"], bad)

    def test_injector_requires_victim_flow(self):
        eng, store, ctrl, sw, hosts = build_net()
        bad = AttackSpec(AttackKind.MITM_INJECT, 1, 0, 1_000, "s1")
        with pytest.raises(ValueError):
            MitmInjector(eng, sw, bad)


class TestTableFlood:
    def run_flood(self):
        eng, store, ctrl, sw, hosts = build_net(table_capacity=32)
        # one legit rule occupies a slot before the attack begins
        eng.schedule(50_000, "s1", "ingress", Packet(LEGIT_KEY, 1000, 50_000, 1))
        src = FloodSource(eng, hosts["attacker"],
                          flood_spec(AttackKind.TABLE_FLOOD, 1_000, 100_000, 200_000))
        eng.run_until(400_000)
        return eng, store, ctrl, sw, hosts, src

    def test_rejections_match_exact_install_arithmetic(self):
        _, _, ctrl, sw, _, src = self.run_flood()
        assert src.sent == 100
        # 32 slots, 1 held by the legit rule: 31 installs succeed, 69 bounce
        assert sw.counters.table_full_rejections == 69
        assert sw.counters.table_full_rejections >= src.sent - 32
        assert ctrl.counters.table_full_replies == 69

    def test_report_reconciles_with_counters(self):
        _, _, ctrl, sw, _, src = self.run_flood()
        report = attack_report(AttackKind.TABLE_FLOOD, [sw], ctrl,
                               sources=[src], legit_keys=[LEGIT_KEY])
        assert report.attack_pkts_sent == src.sent == 100
        assert report.table_full_rejections == sw.counters.table_full_rejections
        assert report.controller_queue_drops == 0
        assert report.legit_setups_completed == 1
        assert report.legit_setup_failures == 0

    def test_legit_flow_arriving_after_exhaustion_fails(self):
        eng, store, ctrl, sw, hosts, src = self.run_flood()
        late_key = FlowKey("hB", "hA", TrafficClass.BULK, None)
        eng.schedule(450_000, "s1", "ingress", Packet(late_key, 1000, 450_000, 2))
        eng.run_until(600_000)
        assert sw.counters.dropped_install_reject >= 1
        report = attack_report(AttackKind.TABLE_FLOOD, [sw], ctrl,
                               sources=[src], legit_keys=[LEGIT_KEY, late_key])
        assert report.legit_setups_completed == 1
        assert report.legit_setup_failures == 1


class TestControllerFlood:
    def run_pair(self, with_attack: bool, queue_bound=10_000):
        # deep packet-in buffer: this measures controller queueing delay,
        # not the switch-side buffer exhaustion that a flood also causes
        eng, store, ctrl, sw, hosts = build_net(
            table_capacity=100_000, budget=20, queue_bound=queue_bound,
            buffer_capacity=10_000)
        src = None
        if with_attack:
            src = FloodSource(eng, hosts["attacker"],
                              flood_spec(AttackKind.CONTROLLER_FLOOD,
                                         4_000, 100_000, 400_000))
        eng.schedule(250_000, "s1", "ingress", Packet(LEGIT_KEY, 1000, 250_000, 1))
        eng.run_until(1_500_000)
        return eng, store, ctrl, sw, src

    def test_baseline_setup_latency_is_one_control_rtt(self):
        _, _, _, sw, _ = self.run_pair(with_attack=False)
        assert sw.setup_latencies == [("hA", 10_000)]

    def test_attack_strictly_inflates_legit_setup_latency(self):
        _, _, ctrl, sw, src = self.run_pair(with_attack=True)
        legit = [lat for s, lat in sw.setup_latencies if s == "hA"]
        assert legit, "legit flow never completed setup"
        assert legit[0] > 10_000
        assert legit[0] > 5 * 10_000  # clearly saturation, not jitter
        report = attack_report(AttackKind.CONTROLLER_FLOOD, [sw], ctrl,
                               sources=[src], legit_keys=[LEGIT_KEY])
        assert report.mean_legit_latency_us() > 10_000

    def test_queue_bound_produces_reconciled_drops(self):
        _, _, ctrl, sw, src = self.run_pair(with_attack=True, queue_bound=50)
        assert ctrl.counters.packet_ins_dropped_queue_full > 0
        report = attack_report(AttackKind.CONTROLLER_FLOOD, [sw], ctrl, sources=[src])
        assert report.controller_queue_drops == ctrl.counters.packet_ins_dropped_queue_full
        received = ctrl.counters.packet_ins_received
        processed = ctrl.counters.packet_ins_processed
        dropped = ctrl.counters.packet_ins_dropped_queue_full
        assert received == processed + dropped


class TestMitmInjection:
    def run_mitm(self, scheme):
        eng, store, ctrl, sw, hosts = build_net(scheme=scheme)
        BulkSource(eng, hosts["hA"],
                   BulkFlowSpec("hA", "hB", 146_000.0, 1460, 50_000, 900_000), idx=0)
        spec = AttackSpec(AttackKind.MITM_INJECT, 1, 300_000, 300_001, "s1",
                          victim_src="hA", victim_dst="hB")
        inj = MitmInjector(eng, sw, spec)
        eng.run_until(1_000_000)
        return eng, store, ctrl, sw, inj

    def test_cleartext_channel_accepts_forged_drop_rule(self):
        _, store, ctrl, sw, inj = self.run_mitm(Scheme.PLAIN)
        assert inj.attempted == 1
        assert inj.accepted == 1
        rule = sw.table.match_packet(LEGIT_KEY)
        assert rule is not None and rule.action.kind is ActionKind.DROP
        # blackhole: deliveries stop at the injection point
        sig = flow_sig(LEGIT_KEY)
        late = [t for t, s, _ in store.deliveries if s == sig and t > 320_000]
        assert late == []
        assert sw.counters.dropped_by_rule > 0

    @pytest.mark.parametrize("scheme", [Scheme.TLS_LIKE, Scheme.HIP_BEX])
    def test_encrypted_channel_rejects_forgery(self, scheme):
        _, store, ctrl, sw, inj = self.run_mitm(scheme)
        assert inj.attempted == 1
        assert inj.accepted == 0
        rule = sw.table.match_packet(LEGIT_KEY)
        assert rule is not None and rule.action.kind is ActionKind.FORWARD
        assert sw.counters.dropped_by_rule == 0
        sig = flow_sig(LEGIT_KEY)
        late = [t for t, s, _ in store.deliveries if s == sig and t > 800_000]
        assert late != []

    def test_acceptance_only_under_cleartext(self):
        outcomes = {}
        for scheme in (Scheme.PLAIN, Scheme.TLS_LIKE, Scheme.HIP_BEX):
            _, _, ctrl, sw, inj = self.run_mitm(scheme)
            report = attack_report(AttackKind.MITM_INJECT, [sw], ctrl,
                                   injectors=[inj])
            outcomes[scheme] = (report.injected_attempted, report.injected_accepted)
        assert outcomes[Scheme.PLAIN] == (1, 1)
        assert outcomes[Scheme.TLS_LIKE] == (1, 0)
        assert outcomes[Scheme.HIP_BEX] == (1, 0)
