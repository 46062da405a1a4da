"""Simulated overlay network substrate.

Nodes joined by latency-weighted links, per-system VPNs, per-node address
tables maintained by a maintenance subsystem, strict-priority egress queues,
and mobile-IP-style re-transfer: when a center's former host receives a
packet for a migrated address, it forwards it one hop to the new host, so
stale sender tables never lose traffic.

Packets are routed by shortest-latency path inside the packet's VPN.  Each
node's table maps virtual addresses to the physical host believed to hold
them; tables on different nodes may legally disagree until a maintenance
update reaches them.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

from .errors import (
    InvariantBreach,
    NotHostedHere,
    PartitionMismatch,
    UnknownNode,
    Unroutable,
    VpnViolation,
)
from .events import EventLoop

NodeId = str

# Message kinds, used for per-element-class message accounting.
KIND_DATA = "data_packet"
KIND_ONS_QUERY = "ons_query"
KIND_ONS_RESPONSE = "ons_response"
KIND_REDIRECT = "redirect_retransfer"
KIND_FILLER = "filler"


@dataclass(frozen=True, slots=True)
class Link:
    a: NodeId
    b: NodeId
    one_way_latency_ms: float

    def __post_init__(self) -> None:
        if self.one_way_latency_ms < 0:
            raise ValueError("link latency must be >= 0")


@dataclass(frozen=True, slots=True)
class PacketRecord:
    """Per-read data carried in a packet: the entire tag word plus the
    time and location of reading, the system id and the policy number."""

    tag_word: int
    system_id: int
    policy_number: int
    read_day: int
    read_minute: int
    read_area: int


@dataclass(frozen=True, slots=True)
class Packet:
    vpn_id: int
    destination: int  # virtual network address (32-bit value)
    priority: bool
    data: tuple[PacketRecord, ...]


@dataclass(frozen=True, slots=True)
class DeliveryRecord:
    """Outcome of one packet journey, finalized at delivery time."""

    destination: int
    vpn_id: int
    source: NodeId
    final_node: NodeId
    path: tuple[NodeId, ...]
    hops: int
    latency_ms: float
    link_ms: float
    queue_wait_ms: float
    service_ms: float
    redirected: bool
    send_time_ms: float
    deliver_time_ms: float
    priority: bool


@dataclass(frozen=True, slots=True)
class QueueWait:
    """One packet's pass through one node's egress queue."""

    node: NodeId
    priority: bool
    kind: str
    system_id: int | None
    arrival_ms: float
    start_ms: float

    @property
    def wait_ms(self) -> float:
        return self.start_ms - self.arrival_ms


class PendingDelivery:
    """Handle returned by send(); record is filled when the packet arrives."""

    def __init__(self, packet: Packet, source: NodeId):
        self.packet = packet
        self.source = source
        self.record: DeliveryRecord | None = None
        self._callbacks: list[Callable[[DeliveryRecord], None]] = []

    def on_delivered(self, callback: Callable[[DeliveryRecord], None]) -> None:
        if self.record is not None:
            callback(self.record)
        else:
            self._callbacks.append(callback)

    def _complete(self, record: DeliveryRecord) -> None:
        self.record = record
        for callback in self._callbacks:
            callback(record)
        self._callbacks.clear()


class CongestionQueue:
    """Two-class queue: strict priority, FIFO within each class.

    A normal item is never dequeued while a priority item is queued.
    dequeue() returns None when empty.
    """

    def __init__(self) -> None:
        self._priority: deque = deque()
        self._normal: deque = deque()

    def enqueue(self, item, priority: bool) -> None:
        (self._priority if priority else self._normal).append(item)

    def dequeue(self):
        if self._priority:
            return self._priority.popleft()
        if self._normal:
            return self._normal.popleft()
        return None

    def has_priority_waiting(self) -> bool:
        return bool(self._priority)

    def __len__(self) -> int:
        return len(self._priority) + len(self._normal)


class _Job:
    """One unit of traffic traversing the network hop by hop."""

    __slots__ = ("path", "index", "priority", "kind", "system_id", "payload",
                 "send_time", "link_ms", "wait_ms", "service_ms", "on_final",
                 "vanish", "_arrival")

    def __init__(self, path, priority, kind, system_id, payload, send_time,
                 on_final, vanish=False):
        self.path = path
        self.index = 0
        self.priority = priority
        self.kind = kind
        self.system_id = system_id
        self.payload = payload
        self.send_time = send_time
        self.link_ms = 0.0
        self.wait_ms = 0.0
        self.service_ms = 0.0
        self.on_final = on_final
        self.vanish = vanish
        self._arrival = send_time


class _EgressServer:
    """Single non-preemptive server per node draining a CongestionQueue."""

    def __init__(self, node: NodeId, network: "OverlayNetwork"):
        self.node = node
        self.network = network
        self.queue = CongestionQueue()
        self.busy = False

    @property
    def service_time(self) -> float:
        rate = self.network.service_rate(self.node)
        return 0.0 if rate is None else 1.0 / rate

    def submit(self, job: _Job) -> None:
        job._arrival = self.network.loop.now
        self.queue.enqueue(job, job.priority)
        if not self.busy:
            self._start()

    def _start(self) -> None:
        job = self.queue.dequeue()
        if job is None:
            return
        if not job.priority and self.queue.has_priority_waiting():
            # Cannot happen with strict-priority dequeue; tripwire counter.
            self.network.priority_inversions += 1
        now = self.network.loop.now
        self.network.queue_waits.append(QueueWait(
            node=self.node, priority=job.priority, kind=job.kind,
            system_id=job.system_id, arrival_ms=job._arrival, start_ms=now))
        job.wait_ms += now - job._arrival
        st = self.service_time
        job.service_ms += st
        self.busy = True
        self.network.loop.schedule_after(st, lambda: self._finish(job))

    def _finish(self, job: _Job) -> None:
        self.busy = False
        self.network._job_serviced(job, self.node)
        if len(self.queue):
            self._start()


class OverlayNetwork:
    """Topology, VPNs, address state and packet forwarding."""

    def __init__(self, loop: EventLoop | None = None):
        self.loop = loop or EventLoop()
        self._nodes: dict[NodeId, float | None] = {}  # node -> service rate
        self._adjacency: dict[NodeId, dict[NodeId, float]] = {}
        self._vpns: dict[int, frozenset[NodeId]] = {}
        self._tables: dict[NodeId, dict[int, NodeId]] = {}
        self._hosting: dict[int, NodeId] = {}  # authoritative addr -> host
        self._redirects: dict[tuple[NodeId, int], NodeId] = {}
        self._servers: dict[NodeId, _EgressServer] = {}
        self._path_cache: dict[tuple[int, NodeId], dict[NodeId, tuple[NodeId, ...]]] = {}
        self.queue_waits: list[QueueWait] = []
        self.priority_inversions = 0

    # --- topology ---------------------------------------------------------

    def add_node(self, node: NodeId, service_rate: float | None = None) -> None:
        if node in self._nodes:
            raise ValueError(f"duplicate node {node!r}")
        if service_rate is not None and service_rate <= 0:
            raise ValueError("service_rate must be positive")
        self._nodes[node] = service_rate
        self._adjacency[node] = {}
        self._tables[node] = {}
        self._servers[node] = _EgressServer(node, self)

    def add_link(self, a: NodeId, b: NodeId, one_way_latency_ms: float) -> None:
        link = Link(a, b, one_way_latency_ms)
        for end in (a, b):
            if end not in self._nodes:
                raise UnknownNode(f"link endpoint {end!r} not in topology")
        self._adjacency[a][b] = link.one_way_latency_ms
        self._adjacency[b][a] = link.one_way_latency_ms
        self._path_cache.clear()

    def has_node(self, node: NodeId) -> bool:
        return node in self._nodes

    def nodes(self) -> list[NodeId]:
        return list(self._nodes)

    def service_rate(self, node: NodeId) -> float | None:
        return self._nodes[node]

    # --- VPNs ---------------------------------------------------------------

    def create_vpn(self, vpn_id: int, members) -> None:
        if vpn_id in self._vpns:
            raise ValueError(f"vpn {vpn_id} already exists")
        members = frozenset(members)
        for node in members:
            if node not in self._nodes:
                raise UnknownNode(f"vpn member {node!r} not in topology")
        self._vpns[vpn_id] = members

    def release_vpn(self, vpn_id: int) -> None:
        self._vpns.pop(vpn_id, None)
        for key in [k for k in self._path_cache if k[0] == vpn_id]:
            del self._path_cache[key]

    def vpn_members(self, vpn_id: int) -> frozenset[NodeId]:
        return self._vpns[vpn_id]

    def vpns(self) -> dict[int, frozenset[NodeId]]:
        return dict(self._vpns)

    # --- address state ------------------------------------------------------

    def host_address(self, addr: int, node: NodeId) -> None:
        """Bind a virtual address to its physical host and tell every node."""
        if node not in self._nodes:
            raise UnknownNode(f"host {node!r} not in topology")
        self._hosting[addr] = node
        self.maintenance_update(addr, node)

    def release_address(self, addr: int) -> None:
        self._hosting.pop(addr, None)
        for table in self._tables.values():
            table.pop(addr, None)
        for key in [k for k in self._redirects if k[1] == addr]:
            del self._redirects[key]

    def hosting(self, addr: int) -> NodeId | None:
        return self._hosting.get(addr)

    def hosting_map(self) -> dict[int, NodeId]:
        return dict(self._hosting)

    def address_table(self, node: NodeId) -> dict[int, NodeId]:
        return dict(self._tables[node])

    def redirect_entries(self) -> dict[tuple[NodeId, int], NodeId]:
        return dict(self._redirects)

    def maintenance_update(self, addr: int, new_host: NodeId, scope=None) -> None:
        """Push addr -> new_host into the address tables of `scope` nodes.

        scope None means every node; a subset leaves the rest stale.
        """
        if new_host not in self._nodes:
            raise UnknownNode(f"host {new_host!r} not in topology")
        nodes = self._nodes if scope is None else list(scope)
        for node in nodes:
            if node not in self._nodes:
                raise UnknownNode(f"scope node {node!r} not in topology")
            self._tables[node][addr] = new_host

    def migrate_center(self, addr: int, old_host: NodeId, new_host: NodeId,
                       propagate: bool = False) -> None:
        """Re-home an address and leave a re-transfer entry at the old host.

        Without propagation, sender tables stay stale and traffic takes one
        extra hop via the redirect.  With propagation the maintenance system
        refreshes every table immediately (the redirect becomes unused).
        """
        if self._hosting.get(addr) != old_host:
            raise NotHostedHere(f"{addr:#x} is not hosted at {old_host!r}")
        if new_host not in self._nodes:
            raise UnknownNode(f"host {new_host!r} not in topology")
        if new_host == old_host:
            return
        self._hosting[addr] = new_host
        # Collapse any older redirect chains: entries pointing at the old
        # host are retargeted, and the new host never redirects to itself.
        for key, target in list(self._redirects.items()):
            if key[1] == addr and target == old_host:
                self._redirects[key] = new_host
        self._redirects[(old_host, addr)] = new_host
        self._redirects.pop((new_host, addr), None)
        if propagate:
            self.maintenance_update(addr, new_host)

    def split_center(self, partition: dict[int, NodeId]) -> None:
        """Distribute one node's hosted addresses across several nodes.

        The partition must cover exactly the address set hosted by that one
        node.  Each address moves with migrate_center semantics (redirect,
        no propagation); no tag word anywhere changes.
        """
        if not partition:
            raise PartitionMismatch("empty partition")
        hosts = {self._hosting.get(a) for a in partition}
        if len(hosts) != 1 or None in hosts:
            raise PartitionMismatch("partition addresses not hosted by a single node")
        old_host = hosts.pop()
        hosted = {a for a, n in self._hosting.items() if n == old_host}
        if hosted != set(partition):
            raise PartitionMismatch(
                f"partition does not cover the hosted address set of {old_host!r}")
        for addr in sorted(partition):
            self.migrate_center(addr, old_host, partition[addr], propagate=False)

    # --- routing ------------------------------------------------------------

    def shortest_path(self, vpn_id: int, src: NodeId, dst: NodeId) -> tuple[NodeId, ...] | None:
        """Shortest-latency path from src to dst using only VPN member nodes.

        Deterministic: ties break on node name.  None when unreachable.
        """
        members = self._vpns.get(vpn_id)
        if members is None or src not in members or dst not in members:
            return None
        cached = self._path_cache.get((vpn_id, src))
        if cached is None:
            cached = self._dijkstra(members, src)
            self._path_cache[(vpn_id, src)] = cached
        return cached.get(dst)

    def _dijkstra(self, members: frozenset[NodeId], src: NodeId) -> dict[NodeId, tuple[NodeId, ...]]:
        dist: dict[NodeId, float] = {src: 0.0}
        prev: dict[NodeId, NodeId] = {}
        visited: set[NodeId] = set()
        heap: list[tuple[float, NodeId]] = [(0.0, src)]
        while heap:
            d, u = heapq.heappop(heap)
            if u in visited:
                continue
            visited.add(u)
            for v, w in sorted(self._adjacency[u].items()):
                if v not in members:
                    continue
                nd = d + w
                if v not in dist or nd < dist[v]:
                    dist[v] = nd
                    prev[v] = u
                    heapq.heappush(heap, (nd, v))
        paths: dict[NodeId, tuple[NodeId, ...]] = {}
        for node in visited:
            chain = [node]
            while chain[-1] != src:
                chain.append(prev[chain[-1]])
            paths[node] = tuple(reversed(chain))
        return paths

    def path_latency(self, path: tuple[NodeId, ...]) -> float:
        return sum(self._adjacency[a][b] for a, b in zip(path, path[1:]))

    # --- traffic ------------------------------------------------------------

    def transmit(self, vpn_id: int, src: NodeId, dst: NodeId, *, priority: bool,
                 kind: str, system_id: int | None = None, payload=None,
                 on_arrival: Callable[[_Job], None] | None = None) -> None:
        """Move one message node-to-node through queues and links."""
        path = self.shortest_path(vpn_id, src, dst)
        if path is None:
            raise VpnViolation(f"no path {src!r}->{dst!r} inside vpn {vpn_id}")
        job = _Job(path, priority, kind, system_id, payload,
                   self.loop.now, on_arrival or (lambda job: None))
        self._advance(job)

    def send(self, packet: Packet, from_node: NodeId) -> PendingDelivery:
        """Forward a packet toward the host its sender believes holds the
        destination address; follow at most one re-transfer redirect.

        Raises Unroutable when the sender's table lacks the address and
        VpnViolation when no in-VPN path exists.
        """
        if from_node not in self._nodes:
            raise UnknownNode(f"sender {from_node!r} not in topology")
        members = self._vpns.get(packet.vpn_id)
        if members is None or from_node not in members:
            raise VpnViolation(f"sender {from_node!r} outside vpn {packet.vpn_id}")
        believed_host = self._tables[from_node].get(packet.destination)
        if believed_host is None:
            raise Unroutable(
                f"address {packet.destination:#010x} not in table of {from_node!r}")
        if self.shortest_path(packet.vpn_id, from_node, believed_host) is None:
            raise VpnViolation(
                f"no path {from_node!r}->{believed_host!r} inside vpn {packet.vpn_id}")

        pending = PendingDelivery(packet, from_node)
        first_leg: list[tuple[NodeId, ...]] = []

        def arrived(job: _Job, via_redirect: bool) -> None:
            node = job.path[-1]
            if self._hosting.get(packet.destination) == node:
                path = first_leg[0] + job.path[1:] if via_redirect else job.path
                record = DeliveryRecord(
                    destination=packet.destination,
                    vpn_id=packet.vpn_id,
                    source=from_node,
                    final_node=node,
                    path=path,
                    hops=len(path) - 1,
                    latency_ms=self.loop.now - job.send_time,
                    link_ms=job.link_ms,
                    queue_wait_ms=job.wait_ms,
                    service_ms=job.service_ms,
                    redirected=via_redirect,
                    send_time_ms=job.send_time,
                    deliver_time_ms=self.loop.now,
                    priority=packet.priority,
                )
                pending._complete(record)
                return
            if via_redirect:
                raise InvariantBreach(
                    f"redirect for {packet.destination:#010x} did not reach its host")
            new_host = self._redirects.get((node, packet.destination))
            if new_host is None:
                raise InvariantBreach(
                    f"packet for {packet.destination:#010x} stranded at {node!r}: "
                    "node neither hosts the address nor holds a redirect")
            first_leg.append(job.path)
            redirect_path = self.shortest_path(packet.vpn_id, node, new_host)
            if redirect_path is None:
                raise VpnViolation(
                    f"no redirect path {node!r}->{new_host!r} inside vpn {packet.vpn_id}")
            follow = _Job(redirect_path, packet.priority, KIND_REDIRECT,
                          job.system_id, packet, job.send_time,
                          lambda j: arrived(j, True))
            follow.link_ms = job.link_ms
            follow.wait_ms = job.wait_ms
            follow.service_ms = job.service_ms
            self._advance(follow)

        path = self.shortest_path(packet.vpn_id, from_node, believed_host)
        system_id = packet.data[0].system_id if packet.data else None
        job = _Job(path, packet.priority, KIND_DATA, system_id, packet,
                   self.loop.now, lambda j: arrived(j, False))
        self._advance(job)
        return pending

    def inject_filler(self, node: NodeId, count: int, priority: bool = False) -> None:
        """Drop `count` filler packets into a node's egress queue right now.

        Fillers consume service slots and vanish; scenarios use them to
        induce congestion deterministically.
        """
        if node not in self._nodes:
            raise UnknownNode(f"node {node!r} not in topology")
        for _ in range(count):
            job = _Job((node,), priority, KIND_FILLER, None, None,
                       self.loop.now, lambda job: None, vanish=True)
            self._servers[node].submit(job)

    # --- internal forwarding ------------------------------------------------

    def _advance(self, job: _Job) -> None:
        node = job.path[job.index]
        if job.index == len(job.path) - 1 and not job.vanish:
            job.on_final(job)
            return
        self._servers[node].submit(job)

    def _job_serviced(self, job: _Job, node: NodeId) -> None:
        if job.vanish:
            job.on_final(job)
            return
        nxt = job.path[job.index + 1]
        latency = self._adjacency[node][nxt]
        job.link_ms += latency

        def arrive() -> None:
            job.index += 1
            self._advance(job)

        self.loop.schedule_after(latency, arrive)
