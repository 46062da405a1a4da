"""Virtual RFID network elements and their lifecycle.

One physical substrate (readers attached to network nodes) is shared by
many service systems.  For each service system the management server
creates a virtual reader inside every physical reader covering the
system's areas, one virtual middleware, a name-service entry, a virtual
service center and a VPN tying the involved nodes together.  Removing the
system releases all of it, leaving the inventory exactly as before.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

from . import codec
from .errors import (
    AddressInUse,
    DuplicateSystem,
    InvariantBreach,
    OnsNotFound,
    SystemMismatch,
    UncoveredArea,
    UnknownNode,
    UnknownSystem,
)
from .network import NodeId, OverlayNetwork
from .policy import PolicyDefinition, PolicyTable, PolicyVerdict, ReadContext, evaluate

MS_PER_MINUTE = 60_000
MS_PER_DAY = 1440 * MS_PER_MINUTE


def minute_of_day(time_ms: float) -> int:
    return int(time_ms // MS_PER_MINUTE) % 1440


def day_index(time_ms: float) -> int:
    return int(time_ms // MS_PER_DAY)


class Mode(enum.Enum):
    """End-to-end dispatch flavor, fixed per service system per run."""

    TWO_STEP = "two-step"
    DIRECT = "direct"


class ReadDisposition(enum.Enum):
    NO_VIRTUAL_READER = "no_virtual_reader"
    POLICY_DISCARD = "policy_discard"
    FORWARDED_TO_MIDDLEWARE = "forwarded_to_middleware"


@dataclass(frozen=True, slots=True)
class ReadEvent:
    """One accepted read, as handed from a virtual reader to middleware."""

    tag_word: int
    system_id: int
    policy_number: int
    time_ms: float
    day: int
    minute: int
    reader_area: int
    reader_id: str
    verdict: PolicyVerdict


@dataclass(frozen=True, slots=True)
class Batch:
    """Ordered group of reads emitted by a middleware buffer."""

    system_id: int
    seq: int
    events: tuple[ReadEvent, ...]
    flushed: bool = False  # True for the end-of-run partial flush


@dataclass(frozen=True, slots=True)
class ReadOutcome:
    disposition: ReadDisposition
    system_id: int
    verdict: PolicyVerdict | None = None
    event: ReadEvent | None = None
    batch: Batch | None = None


@dataclass(slots=True)
class VirtualReader:
    system_id: int
    reader_id: str
    vpn_id: int
    policy_table: PolicyTable
    middleware: "VirtualMiddleware"


@dataclass(slots=True)
class PhysicalReader:
    reader_id: str
    area: int
    node: NodeId
    virtual_readers: dict[int, VirtualReader] = field(default_factory=dict)


class VirtualMiddleware:
    """Accumulates reads and emits fixed-size batches in arrival order."""

    def __init__(self, system_id: int, node: NodeId, vpn_id: int,
                 accumulation_threshold: int, mode: Mode):
        if accumulation_threshold < 1:
            raise ValueError("accumulation_threshold must be >= 1")
        self.system_id = system_id
        self.node = node
        self.vpn_id = vpn_id
        self.accumulation_threshold = accumulation_threshold
        self.mode = mode
        self.buffer: list[ReadEvent] = []
        self._seq = 0

    def ingest(self, event: ReadEvent) -> Batch | None:
        """Append one event; return a full batch when the threshold fills."""
        if event.system_id != self.system_id:
            raise SystemMismatch(
                f"event of system {event.system_id} handed to middleware "
                f"of system {self.system_id}")
        self.buffer.append(event)
        if len(self.buffer) >= self.accumulation_threshold:
            return self._emit(flushed=False)
        return None

    def flush(self) -> Batch | None:
        """Emit whatever is buffered as a final partial batch."""
        if not self.buffer:
            return None
        return self._emit(flushed=True)

    def _emit(self, flushed: bool) -> Batch:
        batch = Batch(self.system_id, self._seq, tuple(self.buffer), flushed)
        self._seq += 1
        self.buffer.clear()
        return batch


class VirtualOns:
    """Per-system name-service element: system id -> center address."""

    def __init__(self, system_id: int, node: NodeId,
                 lookup_processing_ms: float = 0.0):
        if lookup_processing_ms < 0:
            raise ValueError("lookup_processing_ms must be >= 0")
        self.system_id = system_id
        self.node = node
        self.lookup_processing_ms = lookup_processing_ms
        self.resolution: dict[int, int] = {}

    def register(self, system_id: int, address: int) -> None:
        self.resolution[system_id] = address

    def lookup(self, system_id: int) -> tuple[int, float]:
        """Resolve a system to its center address; returns (addr, cost_ms)."""
        if system_id not in self.resolution:
            raise OnsNotFound(f"system {system_id} not registered")
        return self.resolution[system_id], self.lookup_processing_ms


@dataclass(frozen=True, slots=True)
class DeliveredEvent:
    """A read logged at the center together with its delivery metadata."""

    event: ReadEvent
    batch_seq: int
    flushed: bool
    deliver_time_ms: float
    batch_latency_ms: float
    redirected: bool


class VirtualServiceCenter:
    """Backend element holding the system's addresses and delivered reads."""

    def __init__(self, system_id: int, addresses, per_event_processing_ms: float = 0.0):
        addresses = tuple(sorted(addresses))
        if not addresses:
            raise ValueError("a service center needs at least one address")
        if per_event_processing_ms < 0:
            raise ValueError("per_event_processing_ms must be >= 0")
        self.system_id = system_id
        self.addresses = addresses
        self.per_event_processing_ms = per_event_processing_ms
        self.received_log: list[DeliveredEvent] = []
        self.processing_ms = 0.0

    @property
    def primary_address(self) -> int:
        # Deterministic choice for two-step resolution: lowest address.
        return self.addresses[0]

    def receive(self, batch: Batch, deliver_time_ms: float,
                batch_latency_ms: float, redirected: bool) -> None:
        """Append a delivered batch to the log and accrue processing cost.

        A cross-system event here is an isolation breach and aborts the run.
        """
        for event in batch.events:
            if event.system_id != self.system_id:
                raise InvariantBreach(
                    f"center of system {self.system_id} received an event "
                    f"of system {event.system_id}")
            self.received_log.append(DeliveredEvent(
                event=event, batch_seq=batch.seq, flushed=batch.flushed,
                deliver_time_ms=deliver_time_ms,
                batch_latency_ms=batch_latency_ms, redirected=redirected))
        self.processing_ms += len(batch.events) * self.per_event_processing_ms


@dataclass(frozen=True)
class ServiceSystemDescriptor:
    """Everything needed to stand up one virtual RFID system."""

    system_id: int
    covered_areas: tuple[int, ...]
    policies: tuple[PolicyDefinition, ...]
    accumulation_threshold: int
    address_assignments: tuple[tuple[int, NodeId], ...]  # (address, host node)
    mode: Mode
    middleware_node: NodeId
    ons_node: NodeId
    ons_processing_ms: float = 0.0
    center_processing_ms: float = 0.0
    extra_vpn_nodes: tuple[NodeId, ...] = ()

    def __post_init__(self) -> None:
        if self.system_id < 1 or self.system_id > codec.SYSTEM_ID_MAX:
            raise ValueError(f"system_id {self.system_id} outside [1, {codec.SYSTEM_ID_MAX}]")
        if not self.covered_areas:
            raise ValueError("covered_areas must be non-empty")
        if not self.address_assignments:
            raise ValueError("at least one address assignment required")
        if self.accumulation_threshold < 1:
            raise ValueError("accumulation_threshold must be >= 1")


@dataclass(slots=True)
class SystemHandle:
    """Live bookkeeping for one created service system."""

    descriptor: ServiceSystemDescriptor
    vpn_id: int
    policy_table: PolicyTable
    virtual_readers: list[VirtualReader]
    middleware: VirtualMiddleware
    ons: VirtualOns
    center: VirtualServiceCenter

    @property
    def system_id(self) -> int:
        return self.descriptor.system_id


class ManagementServer:
    """Creates and removes whole virtual RFID systems on the shared substrate."""

    def __init__(self, network: OverlayNetwork):
        self.network = network
        self._readers: dict[str, PhysicalReader] = {}
        self._systems: dict[int, SystemHandle] = {}

    # --- physical substrate -------------------------------------------------

    def add_physical_reader(self, reader_id: str, area: int, node: NodeId) -> PhysicalReader:
        if reader_id in self._readers:
            raise ValueError(f"duplicate reader {reader_id!r}")
        if not self.network.has_node(node):
            raise UnknownNode(f"reader {reader_id!r} attached to unknown node {node!r}")
        reader = PhysicalReader(reader_id, area, node)
        self._readers[reader_id] = reader
        return reader

    def reader(self, reader_id: str) -> PhysicalReader:
        return self._readers[reader_id]

    def readers(self) -> list[PhysicalReader]:
        return list(self._readers.values())

    def system(self, system_id: int) -> SystemHandle:
        if system_id not in self._systems:
            raise UnknownSystem(f"system {system_id} is not active")
        return self._systems[system_id]

    def systems(self) -> list[SystemHandle]:
        return list(self._systems.values())

    # --- lifecycle ------------------------------------------------------------

    def create_virtual_system(self, desc: ServiceSystemDescriptor) -> SystemHandle:
        """Stand up every virtual element for one service system.

        One virtual reader appears on every physical reader whose area is
        covered; middleware, name service and center are created once; a VPN
        containing all involved nodes is created and the system's address
        bindings are pushed to every node's table.
        """
        if desc.system_id in self._systems:
            raise DuplicateSystem(f"system {desc.system_id} already active")
        covered = set(desc.covered_areas)
        hosts = {r.area for r in self._readers.values()}
        missing = sorted(covered - hosts)
        if missing:
            raise UncoveredArea(f"no physical reader in area(s) {missing}")
        allocated = {a for h in self._systems.values()
                     for a, _ in h.descriptor.address_assignments}
        addresses = [a for a, _ in desc.address_assignments]
        if len(set(addresses)) != len(addresses):
            raise AddressInUse("duplicate address inside the descriptor")
        clashes = sorted(set(addresses) & allocated)
        if clashes:
            raise AddressInUse(
                "address(es) already allocated: "
                + ", ".join(codec.format_address(a) for a in clashes))
        for node in self._involved_nodes(desc):
            if not self.network.has_node(node):
                raise UnknownNode(f"system {desc.system_id} references unknown node {node!r}")

        vpn_id = desc.system_id
        self.network.create_vpn(vpn_id, self._involved_nodes(desc))
        for addr, host in desc.address_assignments:
            self.network.host_address(addr, host)

        table = PolicyTable(list(desc.policies))
        middleware = VirtualMiddleware(desc.system_id, desc.middleware_node,
                                       vpn_id, desc.accumulation_threshold, desc.mode)
        center = VirtualServiceCenter(desc.system_id, addresses,
                                      desc.center_processing_ms)
        ons = VirtualOns(desc.system_id, desc.ons_node, desc.ons_processing_ms)
        ons.register(desc.system_id, center.primary_address)

        virtual_readers = []
        for reader in self._readers.values():
            if reader.area in covered:
                vr = VirtualReader(desc.system_id, reader.reader_id, vpn_id,
                                   table, middleware)
                reader.virtual_readers[desc.system_id] = vr
                virtual_readers.append(vr)

        handle = SystemHandle(desc, vpn_id, table, virtual_readers,
                              middleware, ons, center)
        self._systems[desc.system_id] = handle
        return handle

    def remove_virtual_system(self, system_id: int) -> None:
        """Release every virtual element, the VPN and the address bindings."""
        handle = self._systems.pop(system_id, None)
        if handle is None:
            raise UnknownSystem(f"system {system_id} is not active")
        for reader in self._readers.values():
            reader.virtual_readers.pop(system_id, None)
        for addr, _ in handle.descriptor.address_assignments:
            self.network.release_address(addr)
        self.network.release_vpn(handle.vpn_id)

    def _involved_nodes(self, desc: ServiceSystemDescriptor) -> set[NodeId]:
        nodes = {desc.middleware_node, desc.ons_node}
        nodes.update(host for _, host in desc.address_assignments)
        nodes.update(desc.extra_vpn_nodes)
        covered = set(desc.covered_areas)
        nodes.update(r.node for r in self._readers.values() if r.area in covered)
        return nodes

    # --- the edge -------------------------------------------------------------

    def reader_on_read(self, reader_id: str, word: int, time_ms: float) -> ReadOutcome:
        """Process one physical read at a reader.

        No virtual reader for the tag's system: the read is silently dropped
        (counted by the caller).  Otherwise the system's policy decides; a
        forwarded read goes to the system's middleware, which may emit a
        batch.
        """
        reader = self._readers[reader_id]
        tag = codec.decode(word)
        vr = reader.virtual_readers.get(tag.system_id)
        if vr is None:
            return ReadOutcome(ReadDisposition.NO_VIRTUAL_READER, tag.system_id)
        ctx = ReadContext(reader_area=reader.area,
                          read_time_min=minute_of_day(time_ms),
                          day_index=day_index(time_ms))
        verdict = evaluate(vr.policy_table, tag.policy_number, ctx)
        if not verdict.forwarded:
            return ReadOutcome(ReadDisposition.POLICY_DISCARD, tag.system_id,
                               verdict=verdict)
        event = ReadEvent(
            tag_word=word, system_id=tag.system_id,
            policy_number=tag.policy_number, time_ms=time_ms,
            day=day_index(time_ms), minute=minute_of_day(time_ms),
            reader_area=reader.area, reader_id=reader_id, verdict=verdict)
        batch = vr.middleware.ingest(event)
        return ReadOutcome(ReadDisposition.FORWARDED_TO_MIDDLEWARE,
                           tag.system_id, verdict=verdict, event=event,
                           batch=batch)

    # --- inventory --------------------------------------------------------------

    def inventory(self) -> dict:
        """Every physical device and the virtual elements it hosts."""
        nodes: dict[str, dict] = {
            node: {"middleware": [], "ons": [], "center_addresses": []}
            for node in self.network.nodes()
        }
        for handle in self._systems.values():
            nodes[handle.middleware.node]["middleware"].append(handle.system_id)
            nodes[handle.ons.node]["ons"].append(handle.system_id)
            for addr, host in handle.descriptor.address_assignments:
                nodes[host]["center_addresses"].append(codec.format_address(addr))
        for entry in nodes.values():
            entry["middleware"].sort()
            entry["ons"].sort()
            entry["center_addresses"].sort()
        readers = {
            r.reader_id: {
                "area": r.area,
                "node": r.node,
                "virtual_readers": sorted(r.virtual_readers),
            }
            for r in self._readers.values()
        }
        vpns = {str(vpn_id): sorted(members)
                for vpn_id, members in self.network.vpns().items()}
        allocations = {
            codec.format_address(addr): handle.system_id
            for handle in self._systems.values()
            for addr, _ in handle.descriptor.address_assignments
        }
        return {
            "nodes": nodes,
            "readers": readers,
            "vpns": vpns,
            "address_allocations": allocations,
        }

    def inventory_json(self) -> str:
        return json.dumps(self.inventory(), sort_keys=True, separators=(",", ":"))
