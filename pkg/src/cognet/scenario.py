"""Scenario files: a line-oriented config format and its object model.

Format: `[section]` opens a singleton section, `[[entry]]` appends a row
to a list section, and `key = value` assigns within the open block.
Blank lines and `#` comments are ignored. A key may be assigned once per
block. Parsing reports line numbers; validation reports entity names.
Serialization is canonical, so parse(serialize(s)) == s.
"""

import enum
from dataclasses import dataclass, field, fields
from typing import Optional

from .secchannel import Scheme

ALL_CHANNELS = -1


class ParseError(Exception):
    pass


class ValidationError(Exception):
    pass


class NodeType(enum.Enum):
    HOST = "host"
    WIRED_SWITCH = "wired_switch"
    WLAN_AP = "wlan_ap"
    COGNITIVE_BS = "cognitive_bs"


SWITCH_TYPES = (NodeType.WIRED_SWITCH, NodeType.WLAN_AP, NodeType.COGNITIVE_BS)

_SCHEMES = {"plain": Scheme.PLAIN, "tls": Scheme.TLS_LIKE, "hip": Scheme.HIP_BEX}


# -- entry dataclasses ----------------------------------------------------------

@dataclass
class MetaCfg:
    name: str = "unnamed"
    seed: int = 1
    duration_s: float = 10.0


@dataclass
class RadioCfg:
    n_channels: int = 8
    capacity_Bps: float = 1_200_000.0
    overhead: float = 0.96
    queue_cap: int = 64


@dataclass
class ControlCfg:
    scheme: Scheme = Scheme.PLAIN
    rtt_us: int = 10_000
    budget_per_interval: int = 200
    interval_us: int = 10_000
    queue_bound: int = 1_000


@dataclass
class AppsCfg:
    l2fwd: bool = True
    l2fwd_idle_s: float = 30.0
    expiry: bool = True
    cogengine: bool = False
    ce_epoch_ms: int = 100
    ce_pmiss: float = 0.0
    ce_pfa: float = 0.0
    mobility: str = "off"
    d_detect_ms: int = 300


@dataclass
class SecchanCfg:
    establishments: int = 0


@dataclass
class PrimaryEntry:
    channel: int = ALL_CHANNELS
    mean_on_s: float = 1.0
    mean_off_s: float = 0.6


@dataclass
class NodeEntry:
    id: str = ""
    kind: NodeType = NodeType.HOST
    table_capacity: int = 128
    buffer_capacity: int = 256
    scheme: str = ""
    ip: str = ""


@dataclass
class LinkEntry:
    a: str = ""
    b: str = ""
    latency_us: int = 1_000


@dataclass
class RadioClientEntry:
    client: str = ""
    bs: str = ""
    channels: Optional[tuple[int, ...]] = None  # None means engine-managed
    uplink_latency_us: int = 1_000


@dataclass
class DemandEntry:
    node: str = ""
    traffic_class: str = "bulk"
    rate_Bps: float = 0.0
    peer: str = ""


@dataclass
class BulkEntry:
    src: str = ""
    dst: str = ""
    rate_Bps: float = 0.0
    packet_bytes: int = 1460
    start_s: float = 0.0
    stop_s: float = 0.0


@dataclass
class VoipEntry:
    src: str = ""
    dst: str = ""
    start_s: float = 0.0
    duration_s: float = 1.0
    calls: int = 1
    gap_s: float = 0.0
    interval_ms: int = 20
    payload_bytes: int = 160
    threshold_ms: int = 150


@dataclass
class ProbeEntry:
    src: str = ""
    dst: str = ""
    interval_ms: int = 100
    size_bytes: int = 64
    start_s: float = 0.0
    stop_s: float = 0.0


@dataclass
class AttachEntry:
    ue: str = ""
    ap: str = ""
    rat: str = "wlan"
    advertised_rate_Bps: float = 0.0
    access_latency_us: int = 2_000
    attached: bool = False


@dataclass
class MihEntry:
    kind: str = "link_down"
    ue: str = ""
    rat: str = "wlan"
    at_s: float = 0.0
    lead_s: float = 0.0


@dataclass
class AttackEntry:
    kind: str = "table_flood"
    rate_per_s: float = 1.0
    start_s: float = 0.0
    stop_s: float = 0.0
    target: str = ""
    attacker: str = ""
    victim_src: str = ""
    victim_dst: str = ""


@dataclass
class IpChangeEntry:
    node: str = ""
    at_s: float = 0.0
    new_ip: str = ""


@dataclass
class Scenario:
    meta: MetaCfg = field(default_factory=MetaCfg)
    radio: RadioCfg = field(default_factory=RadioCfg)
    control: ControlCfg = field(default_factory=ControlCfg)
    apps: AppsCfg = field(default_factory=AppsCfg)
    secchan: SecchanCfg = field(default_factory=SecchanCfg)
    primaries: list[PrimaryEntry] = field(default_factory=list)
    nodes: list[NodeEntry] = field(default_factory=list)
    links: list[LinkEntry] = field(default_factory=list)
    radio_clients: list[RadioClientEntry] = field(default_factory=list)
    demands: list[DemandEntry] = field(default_factory=list)
    bulks: list[BulkEntry] = field(default_factory=list)
    voips: list[VoipEntry] = field(default_factory=list)
    probes: list[ProbeEntry] = field(default_factory=list)
    attachments: list[AttachEntry] = field(default_factory=list)
    mih_events: list[MihEntry] = field(default_factory=list)
    attacks: list[AttackEntry] = field(default_factory=list)
    ip_changes: list[IpChangeEntry] = field(default_factory=list)

    def node(self, node_id: str) -> Optional[NodeEntry]:
        for n in self.nodes:
            if n.id == node_id:
                return n
        return None

    def hosts(self) -> list[str]:
        return [n.id for n in self.nodes if n.kind is NodeType.HOST]

    def switches(self) -> list[NodeEntry]:
        return [n for n in self.nodes if n.kind in SWITCH_TYPES]

    def scheme_for(self, node_id: str) -> Scheme:
        node = self.node(node_id)
        if node is not None and node.scheme:
            return _SCHEMES[node.scheme]
        return self.control.scheme


# -- value conversion -------------------------------------------------------------

def _to_bool(raw: str) -> bool:
    if raw in ("true", "on", "yes"):
        return True
    if raw in ("false", "off", "no"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _to_scheme(raw: str) -> Scheme:
    if raw not in _SCHEMES:
        raise ValueError(f"unknown scheme {raw!r} (plain, tls, hip)")
    return _SCHEMES[raw]


def _to_node_type(raw: str) -> NodeType:
    try:
        return NodeType(raw)
    except ValueError:
        raise ValueError(f"unknown node kind {raw!r}")


def _to_channels(raw: str) -> Optional[tuple[int, ...]]:
    if raw == "auto":
        return None
    return tuple(sorted(int(tok) for tok in raw.split()))


def _to_primary_channel(raw: str) -> int:
    return ALL_CHANNELS if raw == "all" else int(raw)


def _from_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Scheme):
        return value.value
    if isinstance(value, NodeType):
        return value.value
    if isinstance(value, tuple):
        return " ".join(str(v) for v in value)
    return str(value)


# section -> (attr on Scenario, entry class, is_list, {key: converter})
_CONVERTERS = {
    "channel": _to_primary_channel,
    "channels": _to_channels,
    "scheme": None,  # resolved per section below
    "kind": None,
}

_SECTIONS: dict[str, tuple[str, type, bool, dict]] = {
    "meta": ("meta", MetaCfg, False, {}),
    "radio": ("radio", RadioCfg, False, {}),
    "control": ("control", ControlCfg, False, {"scheme": _to_scheme}),
    "apps": ("apps", AppsCfg, False, {}),
    "secchan": ("secchan", SecchanCfg, False, {}),
    "primary": ("primaries", PrimaryEntry, True, {"channel": _to_primary_channel}),
    "node": ("nodes", NodeEntry, True, {"kind": _to_node_type}),
    "link": ("links", LinkEntry, True, {}),
    "radio_client": ("radio_clients", RadioClientEntry, True, {"channels": _to_channels}),
    "demand": ("demands", DemandEntry, True, {}),
    "bulk": ("bulks", BulkEntry, True, {}),
    "voip": ("voips", VoipEntry, True, {}),
    "probe": ("probes", ProbeEntry, True, {}),
    "attach": ("attachments", AttachEntry, True, {}),
    "mih": ("mih_events", MihEntry, True, {}),
    "attack": ("attacks", AttackEntry, True, {}),
    "ip_change": ("ip_changes", IpChangeEntry, True, {}),
}


def _convert(section: str, entry_cls: type, key: str, raw: str, line_no: int):
    special = _SECTIONS[section][3].get(key)
    if special is not None:
        try:
            return special(raw)
        except ValueError as exc:
            raise ParseError(f"line {line_no}: {exc}") from None
    for f in fields(entry_cls):
        if f.name != key:
            continue
        typ = f.type if isinstance(f.type, type) else str(f.type)
        try:
            if typ in (bool, "bool"):
                return _to_bool(raw)
            if typ in (int, "int"):
                return int(raw)
            if typ in (float, "float"):
                return float(raw)
            return raw
        except ValueError:
            raise ParseError(
                f"line {line_no}: bad value {raw!r} for {section}.{key}"
            ) from None
    raise ParseError(f"line {line_no}: unknown key {key!r} in [{section}]")


def parse_scenario(text: str) -> Scenario:
    scn = Scenario()
    section: Optional[str] = None
    current: Optional[object] = None
    seen_keys: set[str] = set()
    seen_singletons: set[str] = set()

    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[[") and line.endswith("]]"):
            name = line[2:-2].strip()
            if name not in _SECTIONS or not _SECTIONS[name][2]:
                raise ParseError(f"line {line_no}: unknown entry type [[{name}]]")
            attr, entry_cls, _, _ = _SECTIONS[name]
            current = entry_cls()
            getattr(scn, attr).append(current)
            section = name
            seen_keys = set()
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in _SECTIONS or _SECTIONS[name][2]:
                raise ParseError(f"line {line_no}: unknown section [{name}]")
            if name in seen_singletons:
                raise ParseError(f"line {line_no}: duplicate section [{name}]")
            seen_singletons.add(name)
            attr, entry_cls, _, _ = _SECTIONS[name]
            current = getattr(scn, attr)
            section = name
            seen_keys = set()
            continue
        if "=" not in line:
            raise ParseError(f"line {line_no}: expected key = value, got {line!r}")
        if section is None or current is None:
            raise ParseError(f"line {line_no}: assignment outside any section")
        key, _, raw_val = line.partition("=")
        key = key.strip()
        raw_val = raw_val.strip()
        if key in seen_keys:
            raise ParseError(f"line {line_no}: duplicate key {key!r} in [{section}]")
        seen_keys.add(key)
        value = _convert(section, type(current), key, raw_val, line_no)
        setattr(current, key, value)
    return scn


def serialize_scenario(scn: Scenario) -> str:
    out: list[str] = []
    for name, (attr, _cls, is_list, _conv) in _SECTIONS.items():
        value = getattr(scn, attr)
        if is_list:
            for entry in value:
                out.append(f"[[{name}]]")
                for f in fields(entry):
                    v = getattr(entry, f.name)
                    if name == "primary" and f.name == "channel":
                        shown = "all" if v == ALL_CHANNELS else str(v)
                    elif name == "radio_client" and f.name == "channels":
                        shown = "auto" if v is None else _from_value(v)
                    else:
                        shown = _from_value(v)
                    out.append(f"{f.name} = {shown}".rstrip())
                out.append("")
        else:
            out.append(f"[{name}]")
            for f in fields(value):
                out.append(f"{f.name} = {_from_value(getattr(value, f.name))}".rstrip())
            out.append("")
    return "\n".join(out).rstrip() + "\n"


# -- validation ---------------------------------------------------------------------

def validate_scenario(scn: Scenario) -> list[str]:
    """Returns a list of problems; empty means the scenario is runnable."""
    problems: list[str] = []
    say = problems.append

    if scn.meta.duration_s <= 0:
        say(f"meta.duration_s must be positive, got {scn.meta.duration_s}")
    if scn.meta.seed < 0:
        say(f"meta.seed must be non-negative, got {scn.meta.seed}")
    if scn.radio.n_channels < 1:
        say("radio.n_channels must be at least 1")
    if not 0 < scn.radio.overhead <= 1:
        say(f"radio.overhead must be in (0, 1], got {scn.radio.overhead}")

    ids = [n.id for n in scn.nodes]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    for d in dupes:
        say(f"node {d!r} declared more than once")
    known = set(ids)
    hosts = set(scn.hosts())
    switches = {n.id for n in scn.switches()}
    cognitive = {n.id for n in scn.nodes if n.kind is NodeType.COGNITIVE_BS}

    for n in scn.nodes:
        if not n.id:
            say("a node entry is missing its id")
        if n.scheme and n.scheme not in _SCHEMES:
            say(f"node {n.id!r} has unknown scheme {n.scheme!r}")

    for lk in scn.links:
        for end in (lk.a, lk.b):
            if end not in known:
                say(f"link {lk.a}-{lk.b} references undeclared node {end!r}")
        if lk.a in hosts and lk.b in hosts:
            say(f"link {lk.a}-{lk.b} connects two hosts")
        if lk.latency_us < 0:
            say(f"link {lk.a}-{lk.b} has negative latency")

    for rc in scn.radio_clients:
        if rc.client not in hosts:
            say(f"radio_client {rc.client!r} is not a declared host")
        if rc.bs not in cognitive:
            say(f"radio_client {rc.client!r} names {rc.bs!r}, not a cognitive BS")
        if rc.channels is None and not scn.apps.cogengine:
            say(f"radio_client {rc.client!r} wants managed channels but the "
                "cognitive engine app is off")
        for ch in rc.channels or ():
            if not 0 <= ch < scn.radio.n_channels:
                say(f"radio_client {rc.client!r} channel {ch} out of range")

    for p in scn.primaries:
        if p.channel != ALL_CHANNELS and not 0 <= p.channel < scn.radio.n_channels:
            say(f"primary on channel {p.channel} out of range")
        if p.mean_on_s <= 0 or p.mean_off_s <= 0:
            say(f"primary on channel {p.channel} needs positive on/off means")

    def check_flow(what, src, dst):
        if src not in hosts:
            say(f"{what} source {src!r} is not a declared host")
        if dst not in hosts:
            say(f"{what} destination {dst!r} is not a declared host")
        if src == dst and src:
            say(f"{what} {src!r} sends to itself")

    for b in scn.bulks:
        check_flow("bulk flow", b.src, b.dst)
        if b.rate_Bps <= 0:
            say(f"bulk flow {b.src}->{b.dst} needs a positive rate")
        if b.stop_s < b.start_s:
            say(f"bulk flow {b.src}->{b.dst} stops before it starts")
    for v in scn.voips:
        check_flow("voice call", v.src, v.dst)
        if v.calls < 1:
            say(f"voice call {v.src}->{v.dst} needs calls >= 1")
    for pr in scn.probes:
        check_flow("probe", pr.src, pr.dst)

    for d in scn.demands:
        if d.node not in hosts:
            say(f"demand node {d.node!r} is not a declared host")
        if d.peer and d.peer not in hosts:
            say(f"demand for {d.node!r} names unknown peer {d.peer!r}")
        if d.traffic_class not in ("bulk", "voip", "control"):
            say(f"demand for {d.node!r} has unknown class {d.traffic_class!r}")

    rats = {"wlan", "cognitive_bs", "wired"}
    att_ues = set()
    for a in scn.attachments:
        att_ues.add(a.ue)
        if a.ue not in hosts:
            say(f"attachment terminal {a.ue!r} is not a declared host")
        if a.ap not in switches:
            say(f"attachment point {a.ap!r} is not a declared switch")
        if a.rat not in rats:
            say(f"attachment {a.ue!r}@{a.ap!r} has unknown RAT {a.rat!r}")

    if scn.apps.mobility not in ("off", "proactive", "reactive", "compare"):
        say(f"apps.mobility must be off/proactive/reactive/compare, "
            f"got {scn.apps.mobility!r}")
    if scn.apps.mobility != "off" and not scn.attachments:
        say("mobility is enabled but no attachments are declared")

    for m in scn.mih_events:
        if m.kind not in ("link_going_down", "link_down", "link_up"):
            say(f"mih event has unknown kind {m.kind!r}")
        if m.ue not in att_ues:
            say(f"mih event terminal {m.ue!r} has no attachments")
        if m.rat not in rats:
            say(f"mih event has unknown RAT {m.rat!r}")

    for atk in scn.attacks:
        if atk.kind not in ("table_flood", "controller_flood", "mitm_inject"):
            say(f"attack has unknown kind {atk.kind!r}")
        if atk.target not in switches:
            say(f"attack target {atk.target!r} is not a declared switch")
        if atk.kind in ("table_flood", "controller_flood"):
            if atk.attacker not in hosts:
                say(f"attack from {atk.attacker!r}: attacker is not a declared host")
            if atk.victim_dst not in hosts:
                say(f"attack on {atk.target!r} floods toward unknown host "
                    f"{atk.victim_dst!r}")
            if atk.rate_per_s <= 0:
                say(f"attack on {atk.target!r} needs a positive rate")
        else:
            if atk.victim_src not in hosts or atk.victim_dst not in hosts:
                say(f"injection on {atk.target!r} names an unknown victim flow "
                    f"{atk.victim_src!r}->{atk.victim_dst!r}")
        if atk.stop_s < atk.start_s:
            say(f"attack on {atk.target!r} stops before it starts")

    for ch in scn.ip_changes:
        if ch.node not in switches:
            say(f"ip change names {ch.node!r}, not a declared switch")
        if not ch.new_ip:
            say(f"ip change for {ch.node!r} is missing new_ip")

    return problems


def load_scenario(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def save_scenario(scn: Scenario, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_scenario(scn))
