"""Flow table tests: every behavior is checked against a naive oracle
(linear scan for matching, brute-force predicate filter for expiry).
"""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cognet.flowcore import (
    ActionKind,
    FlowAction,
    FlowKey,
    FlowTable,
    InstallOutcome,
    MatchPattern,
    RuleSpec,
    StaleRule,
    TrafficClass,
)

NODES = ["h1", "h2", "h3", "bs0"]
W = MatchPattern.WILDCARD


def naive_match(rules, key):
    """Independent oracle: scan everything, pick max priority then min id."""
    hits = [r for r in rules if r.pattern.matches(key)]
    if not hits:
        return None
    return min(hits, key=lambda r: (-r.priority, r.rule_id))


def naive_expired(rules, now):
    """Independent oracle: brute-force both timeout predicates."""
    out = [
        r.rule_id
        for r in rules
        if (r.idle_timeout > 0 and now - r.last_hit >= r.idle_timeout)
        or (r.hard_timeout > 0 and now - r.installed_at >= r.hard_timeout)
    ]
    return sorted(out)


def key(src="h1", dst="h2", tc=TrafficClass.BULK, port=None):
    return FlowKey(src, dst, tc, port)


class TestMatch:
    def test_empty_table_misses(self):
        table = FlowTable(capacity=8)
        assert table.match_packet(key()) is None

    def test_priority_beats_catch_all(self):
        table = FlowTable(capacity=8)
        _, low = table.install_rule(
            RuleSpec(MatchPattern.any(), FlowAction.drop(), priority=5), now=0
        )
        _, high = table.install_rule(
            RuleSpec(MatchPattern(src_node="h1"), FlowAction.forward(1), priority=10), now=0
        )
        assert table.match_packet(key(src="h1")) is high
        assert table.match_packet(key(src="h2")) is low

    def test_equal_priority_lowest_rule_id_wins(self):
        table = FlowTable(capacity=8)
        # burn ids so the contenders get ids 3 and 4
        table.install_rule(RuleSpec(MatchPattern(src_node="x"), FlowAction.drop()), now=0)
        table.install_rule(RuleSpec(MatchPattern(src_node="y"), FlowAction.drop()), now=0)
        _, first = table.install_rule(RuleSpec(MatchPattern.any(), FlowAction.drop(), priority=7), now=0)
        _, second = table.install_rule(
            RuleSpec(MatchPattern(src_node="h1"), FlowAction.forward(2), priority=7), now=0
        )
        assert first.rule_id < second.rule_id
        assert table.match_packet(key(src="h1")) is first

    def test_match_does_not_touch_counters(self):
        table = FlowTable(capacity=8)
        _, rule = table.install_rule(RuleSpec(MatchPattern.any(), FlowAction.drop()), now=0)
        table.match_packet(key())
        assert rule.packet_count == 0 and rule.byte_count == 0


class TestApplyHit:
    def test_counters_accumulate(self):
        table = FlowTable(capacity=8)
        _, rule = table.install_rule(RuleSpec(MatchPattern.any(), FlowAction.drop()), now=0)
        table.apply_hit(rule, 500, now=10)
        table.apply_hit(rule, 700, now=20)
        assert (rule.packet_count, rule.byte_count) == (2, 1200)
        assert rule.last_hit == 20

    def test_hit_on_evicted_rule_raises(self):
        table = FlowTable(capacity=8)
        _, rule = table.install_rule(RuleSpec(MatchPattern.any(), FlowAction.drop()), now=0)
        table.remove(rule.rule_id)
        with pytest.raises(StaleRule):
            table.apply_hit(rule, 100, now=5)


class TestInstall:
    def test_capacity_rejects_third_rule(self):
        table = FlowTable(capacity=2)
        for src in ("a", "b"):
            outcome, _ = table.install_rule(
                RuleSpec(MatchPattern(src_node=src), FlowAction.drop()), now=0
            )
            assert outcome is InstallOutcome.ADDED
        outcome, rule = table.install_rule(
            RuleSpec(MatchPattern(src_node="c"), FlowAction.drop()), now=0
        )
        assert outcome is InstallOutcome.REJECTED
        assert rule is None
        assert len(table) == 2

    def test_reinstall_replaces_and_resets_counters(self):
        table = FlowTable(capacity=2)
        spec = RuleSpec(MatchPattern(src_node="a"), FlowAction.drop(), priority=3)
        _, rule = table.install_rule(spec, now=0)
        table.apply_hit(rule, 999, now=50)
        outcome, same = table.install_rule(
            RuleSpec(MatchPattern(src_node="a"), FlowAction.forward(4), priority=3), now=60
        )
        assert outcome is InstallOutcome.REPLACED
        assert same is rule
        assert same.action.kind is ActionKind.FORWARD
        assert (same.packet_count, same.byte_count) == (0, 0)
        assert same.installed_at == 60

    def test_replacement_works_even_at_capacity(self):
        table = FlowTable(capacity=1)
        table.install_rule(RuleSpec(MatchPattern.any(), FlowAction.drop()), now=0)
        outcome, _ = table.install_rule(RuleSpec(MatchPattern.any(), FlowAction.forward(1)), now=1)
        assert outcome is InstallOutcome.REPLACED

    def test_zero_timeouts_never_expire(self):
        table = FlowTable(capacity=2)
        table.install_rule(RuleSpec(MatchPattern.any(), FlowAction.drop()), now=0)
        assert table.expire_rules(now=10**12) == []


class TestExpiry:
    def test_idle_expiry(self):
        table = FlowTable(capacity=4)
        _, rule = table.install_rule(
            RuleSpec(MatchPattern.any(), FlowAction.drop(), idle_timeout=5_000_000), now=0
        )
        table.apply_hit(rule, 1, now=1_000_000)
        assert table.expire_rules(now=5_999_999) == []
        assert table.expire_rules(now=6_000_000) == [rule.rule_id]
        assert len(table) == 0

    def test_hard_expiry_dominates_recent_hit(self):
        table = FlowTable(capacity=4)
        _, rule = table.install_rule(
            RuleSpec(MatchPattern.any(), FlowAction.drop(), hard_timeout=10_000_000), now=0
        )
        table.apply_hit(rule, 1, now=9_000_000)
        assert table.expire_rules(now=10_000_000) == [rule.rule_id]

    def test_expiry_idempotent(self):
        table = FlowTable(capacity=4)
        table.install_rule(
            RuleSpec(MatchPattern.any(), FlowAction.drop(), idle_timeout=1_000), now=0
        )
        assert table.expire_rules(now=5_000) != []
        assert table.expire_rules(now=5_000) == []


# -- randomized oracle comparisons --------------------------------------

pattern_field = st.sampled_from(NODES) | st.just(W)
tc_field = st.sampled_from(list(TrafficClass)) | st.just(W)
port_field = st.sampled_from([0, 1, 2, None]) | st.just(W)

patterns = st.builds(MatchPattern, pattern_field, pattern_field, tc_field, port_field)
keys = st.builds(
    FlowKey,
    st.sampled_from(NODES),
    st.sampled_from(NODES),
    st.sampled_from(list(TrafficClass)),
    st.sampled_from([0, 1, 2, None]),
)
specs = st.builds(
    RuleSpec,
    patterns,
    st.just(FlowAction.drop()),
    st.integers(min_value=0, max_value=4),
    st.sampled_from([0, 10, 1_000, 100_000]),
    st.sampled_from([0, 50, 5_000, 500_000]),
)


@settings(max_examples=200)
@given(st.lists(specs, max_size=12), st.lists(keys, min_size=1, max_size=8))
def test_match_equals_naive_scan(spec_list, key_list):
    table = FlowTable(capacity=8)
    for spec in spec_list:
        table.install_rule(spec, now=0)
    for k in key_list:
        got = table.match_packet(k)
        want = naive_match(table.rules(), k)
        if want is None:
            assert got is None
        else:
            assert got is not None
            assert (got.priority, got.rule_id) == (want.priority, want.rule_id)


@settings(max_examples=200)
@given(
    st.lists(specs, max_size=12),
    st.lists(st.integers(min_value=0, max_value=600_000), min_size=1, max_size=6),
)
def test_expiry_equals_brute_force_filter(spec_list, times):
    table = FlowTable(capacity=10)
    for spec in spec_list:
        table.install_rule(spec, now=0)
    for now in sorted(times):
        want = naive_expired(table.rules(), now)
        got = table.expire_rules(now)
        assert got == want
        survivor_ids = {r.rule_id for r in table.rules()}
        assert survivor_ids.isdisjoint(got)


@settings(max_examples=150)
@given(st.lists(st.tuples(st.sampled_from(["install", "expire", "hit"]), specs,
                          st.integers(min_value=0, max_value=1_000_000)), max_size=30))
def test_capacity_never_exceeded(ops):
    table = FlowTable(capacity=4)
    clock = 0
    for op, spec, t in ops:
        clock = max(clock, t)
        if op == "install":
            table.install_rule(spec, now=clock)
        elif op == "expire":
            table.expire_rules(now=clock)
        else:
            rules = table.rules()
            if rules:
                table.apply_hit(rules[0], 100, now=clock)
        assert len(table) <= 4
        ids = [r.rule_id for r in table.rules()]
        assert len(ids) == len(set(ids))
