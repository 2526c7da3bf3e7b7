"""Scenario format: parsing, canonical serialization, validation."""

import pytest

from cognet.scenario import (
    ALL_CHANNELS,
    NodeType,
    ParseError,
    Scenario,
    parse_scenario,
    serialize_scenario,
    validate_scenario,
)
from cognet.secchannel import Scheme

GOOD = """\
[meta]
name = demo
seed = 7
duration_s = 12.5

[radio]
n_channels = 4
capacity_Bps = 1200000.0

[control]
scheme = tls
rtt_us = 8000

[apps]
cogengine = true
mobility = off

[[primary]]
channel = all
mean_on_s = 1.0
mean_off_s = 0.6

[[primary]]
channel = 2
mean_on_s = 0.5
mean_off_s = 0.5

[[node]]
id = hS
kind = host

[[node]]
id = s1
kind = wired_switch
table_capacity = 64

[[node]]
id = bs1
kind = cognitive_bs
scheme = hip

[[node]]
id = c1
kind = host

[[link]]
a = hS
b = s1
latency_us = 1000

[[link]]
a = s1
b = bs1
latency_us = 2000

[[radio_client]]
client = c1
bs = bs1
channels = 3 1

[[bulk]]
src = hS
dst = c1
rate_Bps = 2000000
start_s = 0.5
stop_s = 10.0
"""


class TestParsing:
    def test_values_land_in_typed_fields(self):
        s = parse_scenario(GOOD)
        assert s.meta.name == "demo"
        assert s.meta.seed == 7
        assert s.meta.duration_s == 12.5
        assert s.radio.n_channels == 4
        assert s.control.scheme is Scheme.TLS_LIKE
        assert s.control.rtt_us == 8000
        assert s.apps.cogengine is True
        assert s.nodes[1].kind is NodeType.WIRED_SWITCH
        assert s.nodes[1].table_capacity == 64
        assert s.nodes[2].scheme == "hip"
        assert s.bulks[0].rate_Bps == 2_000_000.0

    def test_channel_list_is_sorted_tuple(self):
        s = parse_scenario(GOOD)
        assert s.radio_clients[0].channels == (1, 3)

    def test_auto_channels_parse_to_none(self):
        s = parse_scenario("[[radio_client]]\nclient = c1\nbs = b\nchannels = auto\n")
        assert s.radio_clients[0].channels is None

    def test_primary_all_is_sentinel(self):
        s = parse_scenario(GOOD)
        assert s.primaries[0].channel == ALL_CHANNELS
        assert s.primaries[1].channel == 2

    def test_unspecified_keys_keep_defaults(self):
        s = parse_scenario("[meta]\nname = x\n")
        assert s.meta.seed == 1
        assert s.control.budget_per_interval == 200
        assert s.apps.l2fwd is True
        assert s.radio.overhead == 0.96

    def test_comments_and_blank_lines_ignored(self):
        s = parse_scenario("# header\n\n[meta]\n# inner\nseed = 3\n")
        assert s.meta.seed == 3

    def test_duplicate_key_reports_line(self):
        with pytest.raises(ParseError, match="line 4.*duplicate key 'seed'"):
            parse_scenario("\n[meta]\nseed = 1\nseed = 2\n")

    def test_duplicate_section_reports_line(self):
        with pytest.raises(ParseError, match="line 3.*duplicate section"):
            parse_scenario("[meta]\nseed = 1\n[meta]\n")

    def test_unknown_section(self):
        with pytest.raises(ParseError, match="line 1.*unknown section"):
            parse_scenario("[nope]\n")

    def test_unknown_entry_type(self):
        with pytest.raises(ParseError, match="line 1.*unknown entry type"):
            parse_scenario("[[nope]]\n")

    def test_list_section_needs_double_brackets(self):
        with pytest.raises(ParseError, match="unknown section"):
            parse_scenario("[node]\nid = x\n")

    def test_unknown_key(self):
        with pytest.raises(ParseError, match="line 2.*unknown key 'volume'"):
            parse_scenario("[meta]\nvolume = 11\n")

    def test_bad_int_value(self):
        with pytest.raises(ParseError, match="line 2.*bad value"):
            parse_scenario("[meta]\nseed = many\n")

    def test_bad_scheme(self):
        with pytest.raises(ParseError, match="line 2.*unknown scheme"):
            parse_scenario("[control]\nscheme = rot13\n")

    def test_assignment_outside_section(self):
        with pytest.raises(ParseError, match="line 1.*outside any section"):
            parse_scenario("seed = 1\n")

    def test_line_without_equals(self):
        with pytest.raises(ParseError, match="line 2.*key = value"):
            parse_scenario("[meta]\njust words\n")

    def test_duplicate_key_scope_resets_per_entry(self):
        # same key in two different [[node]] entries is fine
        s = parse_scenario("[[node]]\nid = a\n[[node]]\nid = b\n")
        assert [n.id for n in s.nodes] == ["a", "b"]


class TestRoundTrip:
    def test_parse_serialize_parse_is_identity(self):
        s1 = parse_scenario(GOOD)
        text = serialize_scenario(s1)
        s2 = parse_scenario(text)
        assert s1 == s2

    def test_serialize_is_canonical(self):
        s = parse_scenario(GOOD)
        once = serialize_scenario(s)
        twice = serialize_scenario(parse_scenario(once))
        assert once == twice

    def test_default_scenario_round_trips(self):
        s = Scenario()
        assert parse_scenario(serialize_scenario(s)) == s

    def test_serialized_text_has_no_trailing_spaces(self):
        for line in serialize_scenario(parse_scenario(GOOD)).splitlines():
            assert line == line.rstrip()


def scn_with(extra: str) -> Scenario:
    return parse_scenario(GOOD + extra)


class TestValidation:
    def test_good_scenario_is_clean(self):
        assert validate_scenario(parse_scenario(GOOD)) == []

    def test_duplicate_node_id(self):
        probs = validate_scenario(scn_with("[[node]]\nid = hS\nkind = host\n"))
        assert any("'hS' declared more than once" in p for p in probs)

    def test_link_to_undeclared_node(self):
        probs = validate_scenario(scn_with("[[link]]\na = s1\nb = ghost\n"))
        assert any("undeclared node 'ghost'" in p for p in probs)

    def test_host_to_host_link(self):
        probs = validate_scenario(scn_with("[[link]]\na = hS\nb = c1\n"))
        assert any("connects two hosts" in p for p in probs)

    def test_radio_client_on_plain_switch(self):
        probs = validate_scenario(
            scn_with("[[radio_client]]\nclient = hS\nbs = s1\nchannels = 0\n"))
        assert any("not a cognitive BS" in p for p in probs)

    def test_radio_client_must_be_host(self):
        probs = validate_scenario(
            scn_with("[[radio_client]]\nclient = s1\nbs = bs1\nchannels = 0\n"))
        assert any("'s1' is not a declared host" in p for p in probs)

    def test_auto_channels_require_engine(self):
        text = GOOD.replace("cogengine = true", "cogengine = false").replace(
            "channels = 3 1", "channels = auto")
        probs = validate_scenario(parse_scenario(text))
        assert any("cognitive engine app is off" in p for p in probs)

    def test_channel_out_of_range(self):
        text = GOOD.replace("channels = 3 1", "channels = 9")
        probs = validate_scenario(parse_scenario(text))
        assert any("channel 9 out of range" in p for p in probs)

    def test_primary_out_of_range(self):
        probs = validate_scenario(scn_with("[[primary]]\nchannel = 12\n"))
        assert any("channel 12 out of range" in p for p in probs)

    def test_flow_endpoints_must_be_hosts(self):
        probs = validate_scenario(
            scn_with("[[bulk]]\nsrc = s1\ndst = c1\nrate_Bps = 1\nstop_s = 1\n"))
        assert any("source 's1' is not a declared host" in p for p in probs)

    def test_flow_to_self(self):
        probs = validate_scenario(
            scn_with("[[voip]]\nsrc = c1\ndst = c1\n"))
        assert any("sends to itself" in p for p in probs)

    def test_bulk_stop_before_start(self):
        probs = validate_scenario(
            scn_with("[[bulk]]\nsrc = hS\ndst = c1\nrate_Bps = 1\n"
                     "start_s = 5\nstop_s = 2\n"))
        assert any("stops before it starts" in p for p in probs)

    def test_mobility_needs_attachments(self):
        text = GOOD.replace("mobility = off", "mobility = proactive")
        probs = validate_scenario(parse_scenario(text))
        assert any("no attachments" in p for p in probs)

    def test_mih_for_unknown_terminal(self):
        probs = validate_scenario(
            scn_with("[[mih]]\nkind = link_down\nue = c1\nrat = wlan\nat_s = 1\n"))
        assert any("'c1' has no attachments" in p for p in probs)

    def test_attack_target_must_be_switch(self):
        probs = validate_scenario(
            scn_with("[[attack]]\nkind = table_flood\ntarget = hS\n"
                     "attacker = c1\nvictim_dst = hS\nrate_per_s = 10\nstop_s = 1\n"))
        assert any("target 'hS' is not a declared switch" in p for p in probs)

    def test_attack_flood_needs_known_victim(self):
        probs = validate_scenario(
            scn_with("[[attack]]\nkind = table_flood\ntarget = s1\n"
                     "attacker = c1\nvictim_dst = nobody\nrate_per_s = 10\nstop_s = 1\n"))
        assert any("unknown host 'nobody'" in p for p in probs)

    def test_mitm_needs_victim_flow(self):
        probs = validate_scenario(
            scn_with("[[attack]]\nkind = mitm_inject\ntarget = s1\n"
                     "victim_src = hS\nvictim_dst = nope\nstart_s = 1\nstop_s = 1\n"))
        assert any("unknown victim flow" in p for p in probs)

    def test_ip_change_names_switch(self):
        probs = validate_scenario(
            scn_with("[[ip_change]]\nnode = c1\nat_s = 1\nnew_ip = 10.0.0.9\n"))
        assert any("not a declared switch" in p for p in probs)

    def test_negative_duration(self):
        text = GOOD.replace("duration_s = 12.5", "duration_s = -1")
        probs = validate_scenario(parse_scenario(text))
        assert any("duration_s must be positive" in p for p in probs)

    def test_problems_accumulate(self):
        probs = validate_scenario(
            scn_with("[[link]]\na = hS\nb = ghost\n"
                     "[[bulk]]\nsrc = hS\ndst = hS\nrate_Bps = 0\nstop_s = 1\n"))
        assert len(probs) >= 3  # undeclared node, self-flow, zero rate
