"""Declarative scenario files: parsing and cross-reference validation.

The format is line-oriented text with named sections, so scenarios diff
cleanly and carry no markup dependency.  First non-comment line must be the
version header ``rfid-fabric-scenario v1``.  ``#`` starts a comment, blank
lines are ignored, and every record is one line of whitespace-separated
tokens, positional first, then ``key=value`` pairs.

Sections::

    [topology]   node <name> [service_rate=<pkts/ms>]
                 link <a> <b> <one-way-latency-ms>
    [readers]    reader <id> area=<int> node=<name>
    [systems]    system <id> mode=<direct|two-step> threshold=<n>
                        middleware=<node> ons=<node> areas=<a,b,...>
                        [ons_ms=<f>] [center_ms=<f>] [vpn=<n1,n2,...>]
                 address system=<id> addr=<dotted-quad> host=<node>
                 policy system=<id> pn=<n> [areas=<a,b>] [sense=<inside|outside>]
                        [window=<start>-<end>] [priority=<yes|no>] [scheme=<n>]
    [tags]       tag <24-hex-digits>
                 tags system=<id> policy=<pn> address=<dotted-quad> serials=<a>..<b>
    [schedule]   read <time> reader=<id> tag=<24-hex>
                 read <time> reader=<id> system=<id> serial=<n>
                 random_reads count=<n> start=<time> end=<time>
                        readers=<r1,r2,...> systems=<s1,s2,...>
    [events]     migrate at=<time> addr=<dotted> from=<node> to=<node> [propagate=yes|no]
                 split at=<time> old=<node> map=<addr>:<node>,<addr>:<node>,...
                 maintenance at=<time> addr=<dotted> host=<node> [scope=all|<n1,n2>]
                 burst at=<time> node=<name> count=<n> [priority=yes|no]

Times are milliseconds; an ``m`` suffix means minutes of simulated clock
(``720m`` = 720 minutes after run start).  Policy windows are minutes since
midnight.  The simulated clock starts at midnight of day 0.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from . import codec
from .elements import Mode, ServiceSystemDescriptor
from .errors import MalformedWord, ParseError, ValidationError
from .policy import (
    AreaCondition,
    AreaSense,
    PolicyDefinition,
    TimeWindow,
)

HEADER = "rfid-fabric-scenario"
VERSION = "v1"

MS_PER_MINUTE = 60_000


@dataclass(frozen=True, slots=True)
class NodeSpec:
    name: str
    service_rate: float | None = None


@dataclass(frozen=True, slots=True)
class LinkSpec:
    a: str
    b: str
    latency_ms: float


@dataclass(frozen=True, slots=True)
class ReaderSpec:
    reader_id: str
    area: int
    node: str


@dataclass(frozen=True, slots=True)
class TagSpec:
    word: int
    system_id: int
    serial: int


@dataclass(frozen=True, slots=True)
class ReadSpec:
    time_ms: float
    reader_id: str
    word: int


@dataclass(frozen=True, slots=True)
class RandomReadsSpec:
    count: int
    start_ms: float
    end_ms: float
    readers: tuple[str, ...]
    systems: tuple[int, ...]
    source_line: str


@dataclass(frozen=True, slots=True)
class MigrateEvent:
    time_ms: float
    address: int
    old_host: str
    new_host: str
    propagate: bool


@dataclass(frozen=True, slots=True)
class SplitEvent:
    time_ms: float
    old_host: str
    partition: tuple[tuple[int, str], ...]


@dataclass(frozen=True, slots=True)
class MaintenanceEvent:
    time_ms: float
    address: int
    host: str
    scope: tuple[str, ...] | None  # None = all nodes


@dataclass(frozen=True, slots=True)
class BurstEvent:
    time_ms: float
    node: str
    count: int
    priority: bool


ControlEvent = MigrateEvent | SplitEvent | MaintenanceEvent | BurstEvent


@dataclass
class Scenario:
    """Validated declarative input for one simulation run."""

    name: str
    source_sha256: str
    nodes: list[NodeSpec] = field(default_factory=list)
    links: list[LinkSpec] = field(default_factory=list)
    readers: list[ReaderSpec] = field(default_factory=list)
    systems: list[ServiceSystemDescriptor] = field(default_factory=list)
    tags: list[TagSpec] = field(default_factory=list)
    reads: list[ReadSpec] = field(default_factory=list)
    random_reads: list[RandomReadsSpec] = field(default_factory=list)
    events: list[ControlEvent] = field(default_factory=list)

    def tags_of_system(self, system_id: int) -> list[TagSpec]:
        return [t for t in self.tags if t.system_id == system_id]

    def tag_by_serial(self, system_id: int, serial: int) -> TagSpec | None:
        for t in self.tags:
            if t.system_id == system_id and t.serial == serial:
                return t
        return None


# --- low-level line helpers -------------------------------------------------


def _split_line(raw: str) -> list[str]:
    return raw.split("#", 1)[0].split()


def _kv(tokens: list[str], line_no: int) -> tuple[list[str], dict[str, str]]:
    positional: list[str] = []
    pairs: dict[str, str] = {}
    for tok in tokens:
        if "=" in tok:
            key, value = tok.split("=", 1)
            if not key or not value:
                raise ParseError(line_no, f"malformed key=value token {tok!r}")
            if key in pairs:
                raise ParseError(line_no, f"duplicate key {key!r}")
            pairs[key] = value
        else:
            if pairs:
                raise ParseError(line_no, f"positional token {tok!r} after key=value")
            positional.append(tok)
    return positional, pairs


def _need(pairs: dict[str, str], key: str, line_no: int) -> str:
    if key not in pairs:
        raise ParseError(line_no, f"missing required key {key!r}")
    return pairs[key]


def _parse_int(text: str, line_no: int, what: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ParseError(line_no, f"{what}: not an integer: {text!r}") from None


def _parse_float(text: str, line_no: int, what: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(line_no, f"{what}: not a number: {text!r}") from None


def _parse_time(text: str, line_no: int, what: str = "time") -> float:
    scale = 1.0
    if text.endswith("m"):
        text, scale = text[:-1], float(MS_PER_MINUTE)
    value = _parse_float(text, line_no, what) * scale
    if value < 0:
        raise ParseError(line_no, f"{what}: must be >= 0")
    return value


def _parse_bool(text: str, line_no: int, what: str) -> bool:
    lowered = text.lower()
    if lowered in ("yes", "true", "1"):
        return True
    if lowered in ("no", "false", "0"):
        return False
    raise ParseError(line_no, f"{what}: expected yes/no, got {text!r}")


def _parse_address(text: str, line_no: int) -> int:
    try:
        return codec.parse_address(text)
    except ValueError:
        raise ParseError(line_no, f"bad address {text!r}") from None


def _parse_word(text: str, line_no: int) -> int:
    try:
        return codec.parse_hex(text)
    except MalformedWord as exc:
        raise ParseError(line_no, f"bad tag word: {exc}") from None


def _parse_mode(text: str, line_no: int) -> Mode:
    norm = text.lower().replace("_", "-")
    for mode in Mode:
        if mode.value == norm:
            return mode
    raise ParseError(line_no, f"unknown mode {text!r}")


# --- parser -------------------------------------------------------------------


class _PendingSystem:
    def __init__(self, line_no: int, system_id: int, pairs: dict[str, str]):
        self.line_no = line_no
        self.system_id = system_id
        self.pairs = pairs
        self.addresses: list[tuple[int, str]] = []
        self.policies: list[PolicyDefinition] = []


def parse_scenario(text: str, name: str = "<inline>") -> Scenario:
    """Parse and validate scenario text; raises ParseError/ValidationError."""
    sha = hashlib.sha256(text.encode()).hexdigest()
    scenario = Scenario(name=name, source_sha256=sha)
    pending: dict[int, _PendingSystem] = {}
    section: str | None = None
    header_seen = False

    for line_no, raw in enumerate(text.splitlines(), start=1):
        tokens = _split_line(raw)
        if not tokens:
            continue
        if not header_seen:
            if tokens != [HEADER, VERSION]:
                raise ParseError(line_no,
                                 f"expected header '{HEADER} {VERSION}'")
            header_seen = True
            continue
        if tokens[0].startswith("["):
            joined = " ".join(tokens)
            if not joined.endswith("]"):
                raise ParseError(line_no, f"malformed section header {joined!r}")
            section = joined[1:-1]
            if section not in ("topology", "readers", "systems", "tags",
                               "schedule", "events"):
                raise ParseError(line_no, f"unknown section {section!r}")
            continue
        if section is None:
            raise ParseError(line_no, "record before any [section]")
        _parse_record(scenario, pending, section, tokens, line_no)

    if not header_seen:
        raise ParseError(1, f"empty input; expected header '{HEADER} {VERSION}'")
    _assemble_systems(scenario, pending)
    _validate(scenario)
    return scenario


def load_scenario(path: str | Path) -> Scenario:
    """Load, parse and validate a scenario file."""
    path = Path(path)
    return parse_scenario(path.read_text(), name=path.stem)


def bundled_scenario_names() -> list[str]:
    """Names of the scenario files shipped with the package."""
    root = resources.files(__package__) / "scenarios"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".scn"))


def load_bundled_scenario(name: str) -> Scenario:
    """Load one of the shipped scenarios by bare name (e.g. 'fig8_direct')."""
    entry = resources.files(__package__) / "scenarios" / f"{name}.scn"
    return parse_scenario(entry.read_text(), name=name)


def _parse_record(scenario: Scenario, pending: dict[int, _PendingSystem],
                  section: str, tokens: list[str], line_no: int) -> None:
    kind = tokens[0]
    positional, pairs = _kv(tokens[1:], line_no)

    if section == "topology":
        if kind == "node":
            if len(positional) != 1:
                raise ParseError(line_no, "node takes exactly one name")
            rate = pairs.get("service_rate")
            scenario.nodes.append(NodeSpec(
                positional[0],
                None if rate is None else _parse_float(rate, line_no, "service_rate")))
        elif kind == "link":
            if len(positional) != 3:
                raise ParseError(line_no, "link takes: link <a> <b> <latency>")
            scenario.links.append(LinkSpec(
                positional[0], positional[1],
                _parse_float(positional[2], line_no, "latency")))
        else:
            raise ParseError(line_no, f"unknown topology record {kind!r}")

    elif section == "readers":
        if kind != "reader" or len(positional) != 1:
            raise ParseError(line_no, "expected: reader <id> area=<n> node=<name>")
        scenario.readers.append(ReaderSpec(
            positional[0],
            _parse_int(_need(pairs, "area", line_no), line_no, "area"),
            _need(pairs, "node", line_no)))

    elif section == "systems":
        _parse_system_record(pending, kind, positional, pairs, line_no)

    elif section == "tags":
        if kind == "tag":
            if len(positional) != 1:
                raise ParseError(line_no, "tag takes exactly one hex word")
            word = _parse_word(positional[0], line_no)
            tag = codec.decode(word)
            scenario.tags.append(TagSpec(word, tag.system_id, tag.serial))
        elif kind == "tags":
            system_id = _parse_int(_need(pairs, "system", line_no), line_no, "system")
            pn = _parse_int(_need(pairs, "policy", line_no), line_no, "policy")
            address = _parse_address(_need(pairs, "address", line_no), line_no)
            serials = _need(pairs, "serials", line_no)
            if ".." not in serials:
                raise ParseError(line_no, "serials must be <first>..<last>")
            first_s, last_s = serials.split("..", 1)
            first = _parse_int(first_s, line_no, "serials")
            last = _parse_int(last_s, line_no, "serials")
            if last < first:
                raise ParseError(line_no, "serials range is backwards")
            for serial in range(first, last + 1):
                word = codec.make_word(system_id, pn, address, serial)
                scenario.tags.append(TagSpec(word, system_id, serial))
        else:
            raise ParseError(line_no, f"unknown tags record {kind!r}")

    elif section == "schedule":
        if kind == "read":
            if len(positional) != 1:
                raise ParseError(line_no, "read takes: read <time> key=value...")
            time_ms = _parse_time(positional[0], line_no)
            reader_id = _need(pairs, "reader", line_no)
            if "tag" in pairs:
                word = _parse_word(pairs["tag"], line_no)
            else:
                # (system, serial) reference; resolved during validation
                word = _SerialRef(
                    _parse_int(_need(pairs, "system", line_no), line_no, "system"),
                    _parse_int(_need(pairs, "serial", line_no), line_no, "serial"))
            scenario.reads.append(ReadSpec(time_ms, reader_id, word))
        elif kind == "random_reads":
            scenario.random_reads.append(RandomReadsSpec(
                count=_parse_int(_need(pairs, "count", line_no), line_no, "count"),
                start_ms=_parse_time(_need(pairs, "start", line_no), line_no, "start"),
                end_ms=_parse_time(_need(pairs, "end", line_no), line_no, "end"),
                readers=tuple(_need(pairs, "readers", line_no).split(",")),
                systems=tuple(
                    _parse_int(s, line_no, "systems")
                    for s in _need(pairs, "systems", line_no).split(",")),
                source_line=" ".join(tokens)))
        else:
            raise ParseError(line_no, f"unknown schedule record {kind!r}")

    elif section == "events":
        at = _parse_time(_need(pairs, "at", line_no), line_no, "at")
        if kind == "migrate":
            scenario.events.append(MigrateEvent(
                at,
                _parse_address(_need(pairs, "addr", line_no), line_no),
                _need(pairs, "from", line_no),
                _need(pairs, "to", line_no),
                _parse_bool(pairs.get("propagate", "no"), line_no, "propagate")))
        elif kind == "split":
            mapping = []
            for part in _need(pairs, "map", line_no).split(","):
                if ":" not in part:
                    raise ParseError(line_no, f"split map entry {part!r} needs addr:node")
                addr_s, node = part.split(":", 1)
                mapping.append((_parse_address(addr_s, line_no), node))
            scenario.events.append(SplitEvent(
                at, _need(pairs, "old", line_no), tuple(mapping)))
        elif kind == "maintenance":
            scope_s = pairs.get("scope", "all")
            scope = None if scope_s == "all" else tuple(scope_s.split(","))
            scenario.events.append(MaintenanceEvent(
                at,
                _parse_address(_need(pairs, "addr", line_no), line_no),
                _need(pairs, "host", line_no),
                scope))
        elif kind == "burst":
            scenario.events.append(BurstEvent(
                at,
                _need(pairs, "node", line_no),
                _parse_int(_need(pairs, "count", line_no), line_no, "count"),
                _parse_bool(pairs.get("priority", "no"), line_no, "priority")))
        else:
            raise ParseError(line_no, f"unknown events record {kind!r}")


class _SerialRef:
    """Placeholder in ReadSpec.word until validation resolves it."""

    __slots__ = ("system_id", "serial")

    def __init__(self, system_id: int, serial: int):
        self.system_id = system_id
        self.serial = serial


def _parse_system_record(pending: dict[int, _PendingSystem], kind: str,
                         positional: list[str], pairs: dict[str, str],
                         line_no: int) -> None:
    if kind == "system":
        if len(positional) != 1:
            raise ParseError(line_no, "system takes exactly one id")
        system_id = _parse_int(positional[0], line_no, "system id")
        if system_id in pending:
            raise ParseError(line_no, f"system {system_id} declared twice")
        for required in ("mode", "threshold", "middleware", "ons", "areas"):
            _need(pairs, required, line_no)
        pending[system_id] = _PendingSystem(line_no, system_id, pairs)
    elif kind == "address":
        system_id = _parse_int(_need(pairs, "system", line_no), line_no, "system")
        if system_id not in pending:
            raise ParseError(line_no, f"address for undeclared system {system_id}")
        pending[system_id].addresses.append((
            _parse_address(_need(pairs, "addr", line_no), line_no),
            _need(pairs, "host", line_no)))
    elif kind == "policy":
        system_id = _parse_int(_need(pairs, "system", line_no), line_no, "system")
        if system_id not in pending:
            raise ParseError(line_no, f"policy for undeclared system {system_id}")
        pending[system_id].policies.append(_parse_policy(pairs, line_no))
    else:
        raise ParseError(line_no, f"unknown systems record {kind!r}")


def _parse_policy(pairs: dict[str, str], line_no: int) -> PolicyDefinition:
    pn = _parse_int(_need(pairs, "pn", line_no), line_no, "pn")
    area_condition = None
    if "areas" in pairs:
        areas = frozenset(_parse_int(a, line_no, "areas")
                          for a in pairs["areas"].split(","))
        sense = AreaSense.INSIDE
        if "sense" in pairs:
            try:
                sense = AreaSense(pairs["sense"].lower())
            except ValueError:
                raise ParseError(line_no, f"unknown sense {pairs['sense']!r}") from None
        area_condition = AreaCondition(areas, sense)
    elif "sense" in pairs:
        raise ParseError(line_no, "sense given without areas")
    time_condition = None
    if "window" in pairs:
        if "-" not in pairs["window"]:
            raise ParseError(line_no, "window must be <start>-<end> minutes")
        start_s, end_s = pairs["window"].split("-", 1)
        start = _parse_int(start_s, line_no, "window")
        end = _parse_int(end_s, line_no, "window")
        try:
            time_condition = TimeWindow(start, end)
        except ValueError as exc:
            raise ParseError(line_no, str(exc)) from None
    try:
        return PolicyDefinition(
            policy_number=pn,
            area_condition=area_condition,
            time_condition=time_condition,
            priority=_parse_bool(pairs.get("priority", "no"), line_no, "priority"),
            encryption_scheme=_parse_int(pairs.get("scheme", "0"), line_no, "scheme"))
    except ValueError as exc:
        raise ParseError(line_no, str(exc)) from None


def _assemble_systems(scenario: Scenario, pending: dict[int, _PendingSystem]) -> None:
    for ps in pending.values():
        pairs, line_no = ps.pairs, ps.line_no
        areas = tuple(_parse_int(a, line_no, "areas")
                      for a in pairs["areas"].split(","))
        extra = tuple(pairs["vpn"].split(",")) if "vpn" in pairs else ()
        try:
            descriptor = ServiceSystemDescriptor(
                system_id=ps.system_id,
                covered_areas=areas,
                policies=tuple(ps.policies),
                accumulation_threshold=_parse_int(pairs["threshold"], line_no,
                                                  "threshold"),
                address_assignments=tuple(ps.addresses),
                mode=_parse_mode(pairs["mode"], line_no),
                middleware_node=pairs["middleware"],
                ons_node=pairs["ons"],
                ons_processing_ms=_parse_float(pairs.get("ons_ms", "0"),
                                               line_no, "ons_ms"),
                center_processing_ms=_parse_float(pairs.get("center_ms", "0"),
                                                  line_no, "center_ms"),
                extra_vpn_nodes=extra)
        except ValueError as exc:
            raise ParseError(line_no, str(exc)) from None
        scenario.systems.append(descriptor)


# --- validation ---------------------------------------------------------------


def _validate(scenario: Scenario) -> None:
    node_names = [n.name for n in scenario.nodes]
    if len(set(node_names)) != len(node_names):
        raise ValidationError("topology", "duplicate node name")
    nodes = set(node_names)

    for link in scenario.links:
        for end in (link.a, link.b):
            if end not in nodes:
                raise ValidationError(f"link {link.a}-{link.b}",
                                      f"unknown node {end!r}")
        if link.latency_ms < 0:
            raise ValidationError(f"link {link.a}-{link.b}", "negative latency")

    reader_ids = set()
    areas_with_readers = set()
    for reader in scenario.readers:
        if reader.reader_id in reader_ids:
            raise ValidationError(f"reader {reader.reader_id}", "duplicate id")
        reader_ids.add(reader.reader_id)
        if reader.node not in nodes:
            raise ValidationError(f"reader {reader.reader_id}",
                                  f"unknown node {reader.node!r}")
        areas_with_readers.add(reader.area)

    system_ids = set()
    declared_addresses: dict[int, int] = {}
    for desc in scenario.systems:
        ref = f"system {desc.system_id}"
        if desc.system_id in system_ids:
            raise ValidationError(ref, "duplicate system id")
        system_ids.add(desc.system_id)
        for node in (desc.middleware_node, desc.ons_node, *desc.extra_vpn_nodes):
            if node not in nodes:
                raise ValidationError(ref, f"unknown node {node!r}")
        for area in desc.covered_areas:
            if area not in areas_with_readers:
                raise ValidationError(ref, f"covered area {area} has no reader")
        for addr, host in desc.address_assignments:
            if host not in nodes:
                raise ValidationError(ref, f"address host {host!r} unknown")
            if addr in declared_addresses:
                raise ValidationError(
                    ref, f"address {codec.format_address(addr)} already "
                         f"assigned to system {declared_addresses[addr]}")
            declared_addresses[addr] = desc.system_id

    tag_index: dict[tuple[int, int], int] = {}
    for tag in scenario.tags:
        key = (tag.system_id, tag.serial)
        if key in tag_index and tag_index[key] != tag.word:
            raise ValidationError(
                f"tag system={tag.system_id} serial={tag.serial}",
                "duplicate serial with a different word")
        tag_index[key] = tag.word

    resolved: list[ReadSpec] = []
    for read in scenario.reads:
        if read.reader_id not in reader_ids:
            raise ValidationError(f"read at {read.time_ms}",
                                  f"unknown reader {read.reader_id!r}")
        word = read.word
        if isinstance(word, _SerialRef):
            if word.system_id not in system_ids:
                raise ValidationError(
                    f"read at {read.time_ms}",
                    f"tag reference to undeclared system {word.system_id}")
            key = (word.system_id, word.serial)
            if key not in tag_index:
                raise ValidationError(
                    f"read at {read.time_ms}",
                    f"no tag with system={word.system_id} serial={word.serial}")
            word = tag_index[key]
        resolved.append(ReadSpec(read.time_ms, read.reader_id, word))
    scenario.reads = resolved

    for spec in scenario.random_reads:
        for reader_id in spec.readers:
            if reader_id not in reader_ids:
                raise ValidationError("random_reads", f"unknown reader {reader_id!r}")
        if spec.end_ms < spec.start_ms:
            raise ValidationError("random_reads", "end before start")
        for system_id in spec.systems:
            if system_id not in system_ids:
                raise ValidationError("random_reads",
                                      f"undeclared system {system_id}")
            if not any(t.system_id == system_id for t in scenario.tags):
                raise ValidationError("random_reads",
                                      f"system {system_id} has no tags")

    for event in scenario.events:
        if isinstance(event, MigrateEvent):
            if event.address not in declared_addresses:
                raise ValidationError("migrate", "address not assigned to any system")
            for node in (event.old_host, event.new_host):
                if node not in nodes:
                    raise ValidationError("migrate", f"unknown node {node!r}")
        elif isinstance(event, SplitEvent):
            if event.old_host not in nodes:
                raise ValidationError("split", f"unknown node {event.old_host!r}")
            for addr, node in event.partition:
                if addr not in declared_addresses:
                    raise ValidationError(
                        "split", f"address {codec.format_address(addr)} not assigned")
                if node not in nodes:
                    raise ValidationError("split", f"unknown node {node!r}")
        elif isinstance(event, MaintenanceEvent):
            if event.address not in declared_addresses:
                raise ValidationError("maintenance", "address not assigned to any system")
            if event.host not in nodes:
                raise ValidationError("maintenance", f"unknown node {event.host!r}")
            for node in event.scope or ():
                if node not in nodes:
                    raise ValidationError("maintenance", f"unknown scope node {node!r}")
        elif isinstance(event, BurstEvent):
            if event.node not in nodes:
                raise ValidationError("burst", f"unknown node {event.node!r}")
            if event.count < 1:
                raise ValidationError("burst", "count must be >= 1")
