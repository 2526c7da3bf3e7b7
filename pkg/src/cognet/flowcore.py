"""OpenFlow-style flow abstraction: match patterns, actions, priority rules
with counters and timeouts, and a capacity-bounded flow table.
"""

import enum
from dataclasses import dataclass, field
from typing import Optional

from .simkernel import SimTime


class TrafficClass(enum.Enum):
    BULK = "bulk"
    VOIP = "voip"
    CONTROL = "control"


@dataclass(frozen=True, slots=True)
class FlowKey:
    src_node: str
    dst_node: str
    traffic_class: TrafficClass
    port_hint: Optional[int] = None


_WILDCARD = object()


@dataclass(frozen=True)
class MatchPattern:
    """Per-field exact-or-wildcard matcher over FlowKey fields.

    A field set to the WILDCARD sentinel matches anything; an all-wildcard
    pattern is the table-miss style catch-all.
    """

    src_node: object = _WILDCARD
    dst_node: object = _WILDCARD
    traffic_class: object = _WILDCARD
    port_hint: object = _WILDCARD

    WILDCARD = _WILDCARD

    def matches(self, key: FlowKey) -> bool:
        return (
            (self.src_node is _WILDCARD or self.src_node == key.src_node)
            and (self.dst_node is _WILDCARD or self.dst_node == key.dst_node)
            and (self.traffic_class is _WILDCARD or self.traffic_class == key.traffic_class)
            and (self.port_hint is _WILDCARD or self.port_hint == key.port_hint)
        )

    @classmethod
    def exact(cls, key: FlowKey) -> "MatchPattern":
        return cls(key.src_node, key.dst_node, key.traffic_class, key.port_hint)

    @classmethod
    def any(cls) -> "MatchPattern":
        return cls()


class ActionKind(enum.Enum):
    FORWARD = "forward"
    DROP = "drop"
    SEND_TO_CONTROLLER = "send_to_controller"
    SET_CHANNEL = "set_channel"


@dataclass(frozen=True, slots=True)
class FlowAction:
    kind: ActionKind
    out_port: Optional[int] = None  # FORWARD
    channel: Optional[int] = None  # SET_CHANNEL

    @classmethod
    def forward(cls, out_port: int) -> "FlowAction":
        return cls(ActionKind.FORWARD, out_port=out_port)

    @classmethod
    def drop(cls) -> "FlowAction":
        return cls(ActionKind.DROP)

    @classmethod
    def set_channel(cls, channel: int) -> "FlowAction":
        return cls(ActionKind.SET_CHANNEL, channel=channel)


@dataclass
class FlowRule:
    rule_id: int
    pattern: MatchPattern
    action: FlowAction
    priority: int
    idle_timeout: SimTime  # 0 = never
    hard_timeout: SimTime  # 0 = never
    installed_at: SimTime
    last_hit: SimTime
    packet_count: int = 0
    byte_count: int = 0


@dataclass(frozen=True, slots=True)
class RuleSpec:
    pattern: MatchPattern
    action: FlowAction
    priority: int = 0
    idle_timeout: SimTime = 0
    hard_timeout: SimTime = 0


class InstallOutcome(enum.Enum):
    ADDED = "added"
    REPLACED = "replaced"
    REJECTED = "rejected"  # table full


class StaleRule(Exception):
    """Hit applied to a rule that is no longer in the table."""


class FlowTable:
    """Priority match-action table holding at most `capacity` rules.

    Lookup keeps a list sorted by (-priority, rule_id) and returns the first
    match, which realizes the highest-priority / lowest-rule_id contract.
    """

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._rules: dict[int, FlowRule] = {}
        self._order: list[FlowRule] = []  # sorted by (-priority, rule_id)
        self._next_id = 1

    def __len__(self) -> int:
        return len(self._rules)

    def __contains__(self, rule_id: int) -> bool:
        return rule_id in self._rules

    def rules(self) -> list[FlowRule]:
        return list(self._order)

    def get(self, rule_id: int) -> Optional[FlowRule]:
        return self._rules.get(rule_id)

    def match_packet(self, key: FlowKey) -> Optional[FlowRule]:
        for rule in self._order:
            if rule.pattern.matches(key):
                return rule
        return None

    def apply_hit(self, rule: FlowRule, size_bytes: int, now: SimTime) -> None:
        if self._rules.get(rule.rule_id) is not rule:
            raise StaleRule(f"rule {rule.rule_id} was evicted")
        rule.packet_count += 1
        rule.byte_count += size_bytes
        rule.last_hit = now

    def install_rule(self, spec: RuleSpec, now: SimTime) -> tuple[InstallOutcome, Optional[FlowRule]]:
        for rule in self._order:
            if rule.priority == spec.priority and rule.pattern == spec.pattern:
                rule.action = spec.action
                rule.idle_timeout = spec.idle_timeout
                rule.hard_timeout = spec.hard_timeout
                rule.packet_count = 0
                rule.byte_count = 0
                rule.installed_at = now
                rule.last_hit = now
                return InstallOutcome.REPLACED, rule
        if len(self._rules) >= self.capacity:
            return InstallOutcome.REJECTED, None
        rule = FlowRule(
            rule_id=self._next_id,
            pattern=spec.pattern,
            action=spec.action,
            priority=spec.priority,
            idle_timeout=spec.idle_timeout,
            hard_timeout=spec.hard_timeout,
            installed_at=now,
            last_hit=now,
        )
        self._next_id += 1
        self._rules[rule.rule_id] = rule
        self._insert_sorted(rule)
        return InstallOutcome.ADDED, rule

    def _insert_sorted(self, rule: FlowRule) -> None:
        sort_key = (-rule.priority, rule.rule_id)
        lo, hi = 0, len(self._order)
        while lo < hi:
            mid = (lo + hi) // 2
            other = self._order[mid]
            if (-other.priority, other.rule_id) < sort_key:
                lo = mid + 1
            else:
                hi = mid
        self._order.insert(lo, rule)

    def remove(self, rule_id: int) -> Optional[FlowRule]:
        rule = self._rules.pop(rule_id, None)
        if rule is not None:
            self._order.remove(rule)
        return rule

    def expire_rules(self, now: SimTime) -> list[int]:
        """Evict idle/hard timed-out rules; returns evicted ids ascending."""
        evicted = []
        for rule in self._order:
            if rule.idle_timeout > 0 and now - rule.last_hit >= rule.idle_timeout:
                evicted.append(rule.rule_id)
            elif rule.hard_timeout > 0 and now - rule.installed_at >= rule.hard_timeout:
                evicted.append(rule.rule_id)
        evicted.sort()
        for rule_id in evicted:
            self.remove(rule_id)
        return evicted
