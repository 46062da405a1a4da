"""Conditional tag processing: policy numbers resolved to forward/discard.

A policy number read off a tag is an opaque key into the service system's
policy table.  Definitions are distributed with the system at creation
time; the virtual reader evaluates them against the read context and either
forwards the read or discards it at the edge.  Conditions are conjunctive
and checked in a fixed order (lookup, area, time) so discard reasons are
deterministic.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import ReservedPolicyNumber

MINUTES_PER_DAY = 1440


class AreaSense(enum.Enum):
    """Whether the area condition requires being inside or outside the set."""

    INSIDE = "inside"
    OUTSIDE = "outside"


class DiscardReason(enum.Enum):
    UNKNOWN_POLICY = "unknown_policy"
    AREA_CONDITION = "area_condition"
    TIME_CONDITION = "time_condition"


@dataclass(frozen=True, slots=True)
class TimeWindow:
    """Half-open daily window [start_min, end_min) in minutes since midnight.

    start > end wraps across midnight; start == end means the whole day.
    """

    start_min: int
    end_min: int

    def __post_init__(self) -> None:
        for name, v in (("start_min", self.start_min), ("end_min", self.end_min)):
            if not 0 <= v < MINUTES_PER_DAY:
                raise ValueError(f"{name} {v} outside [0, {MINUTES_PER_DAY})")


def in_window(window: TimeWindow, minute: int) -> bool:
    """Membership test for a daily time window; minute must be in [0, 1440)."""
    start, end = window.start_min, window.end_min
    if start == end:
        return True
    if start < end:
        return start <= minute < end
    return minute >= start or minute < end


@dataclass(frozen=True, slots=True)
class AreaCondition:
    areas: frozenset[int]
    sense: AreaSense = AreaSense.INSIDE

    def passes(self, reader_area: int) -> bool:
        inside = reader_area in self.areas
        return inside if self.sense is AreaSense.INSIDE else not inside


@dataclass(frozen=True, slots=True)
class PolicyDefinition:
    """One conditional-processing rule.

    All present conditions must pass for a Forward verdict.  priority marks
    forwarded packets for the priority queue class; encryption_scheme is an
    8-bit scheme identifier carried through verdicts (0 = none) -- no
    cryptographic operation is ever performed here.
    """

    policy_number: int
    area_condition: AreaCondition | None = None
    time_condition: TimeWindow | None = None
    priority: bool = False
    encryption_scheme: int = 0

    def __post_init__(self) -> None:
        if self.policy_number < 1 or self.policy_number > 255:
            raise ValueError(f"policy_number {self.policy_number} outside [1, 255]")
        if not 0 <= self.encryption_scheme <= 255:
            raise ValueError("encryption_scheme outside [0, 255]")


@dataclass(frozen=True, slots=True)
class ReadContext:
    """Where and when a read happened."""

    reader_area: int
    read_time_min: int
    day_index: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.read_time_min < MINUTES_PER_DAY:
            raise ValueError("read_time_min outside [0, 1440)")
        if self.day_index < 0:
            raise ValueError("day_index must be non-negative")


@dataclass(frozen=True, slots=True)
class PolicyVerdict:
    """Exactly one outcome: Forward (with pass-through flags) or Discard."""

    forwarded: bool
    priority: bool = False
    encryption_scheme: int = 0
    discard_reason: DiscardReason | None = None

    @classmethod
    def forward(cls, priority: bool = False, encryption_scheme: int = 0) -> "PolicyVerdict":
        return cls(True, priority, encryption_scheme, None)

    @classmethod
    def discard(cls, reason: DiscardReason) -> "PolicyVerdict":
        return cls(False, False, 0, reason)


class PolicyTable:
    """Per-system association from policy number to its definition.

    Filled when the system is created and treated as read-only afterwards;
    re-registering a number replaces the previous definition.
    """

    def __init__(self, definitions: "list[PolicyDefinition] | None" = None):
        self._entries: dict[int, PolicyDefinition] = {}
        for d in definitions or []:
            self.register(d)

    def register(self, definition: PolicyDefinition) -> None:
        if definition.policy_number == 0:
            raise ReservedPolicyNumber("policy number 0 is reserved")
        self._entries[definition.policy_number] = definition

    def revoke(self, policy_number: int) -> None:
        self._entries.pop(policy_number, None)

    def lookup(self, policy_number: int) -> PolicyDefinition | None:
        return self._entries.get(policy_number)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, policy_number: int) -> bool:
        return policy_number in self._entries


def evaluate(table: PolicyTable, policy_number: int, ctx: ReadContext) -> PolicyVerdict:
    """Resolve a policy number against a table and a read context.

    Total and deterministic: every failure mode is a Discard verdict.
    Number 0 forwards unconditionally; an unknown number >= 1 is discarded
    (fail-safe: an unresolvable condition must not leak reads).
    """
    if policy_number == 0:
        return PolicyVerdict.forward()
    definition = table.lookup(policy_number)
    if definition is None:
        return PolicyVerdict.discard(DiscardReason.UNKNOWN_POLICY)
    if definition.area_condition is not None:
        if not definition.area_condition.passes(ctx.reader_area):
            return PolicyVerdict.discard(DiscardReason.AREA_CONDITION)
    if definition.time_condition is not None:
        if not in_window(definition.time_condition, ctx.read_time_min):
            return PolicyVerdict.discard(DiscardReason.TIME_CONDITION)
    return PolicyVerdict.forward(definition.priority, definition.encryption_scheme)
