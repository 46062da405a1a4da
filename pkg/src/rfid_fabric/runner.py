"""Scenario execution: build, simulate, account, tear down.

Ordering is fully deterministic: reads are sorted by time (stable), control
events follow reads at equal timestamps, the end-of-run flush runs last,
and the event loop breaks remaining ties by scheduling order.  Two runs
with the same (scenario, seed, mode) produce byte-identical reports.
"""

from __future__ import annotations

import dataclasses
import random
from dataclasses import dataclass, field

from . import pipelines
from .elements import Batch, ManagementServer, Mode, ReadDisposition, VirtualServiceCenter
from .errors import InvariantBreach
from .events import EventLoop
from .metrics import MetricsReport, SystemMetrics
from .network import (
    KIND_DATA,
    KIND_ONS_QUERY,
    KIND_ONS_RESPONSE,
    KIND_REDIRECT,
    OverlayNetwork,
    QueueWait,
)
from .pipelines import BatchDelivery
from .scenario import (
    BurstEvent,
    MaintenanceEvent,
    MigrateEvent,
    ReadSpec,
    Scenario,
    SplitEvent,
)

KIND_READER_TO_MIDDLEWARE = "reader_to_middleware"


@dataclass
class RunResult:
    """Everything a run produced, for reports and invariant checks."""

    scenario: Scenario
    seed: int
    mode_label: str
    report: MetricsReport
    deliveries: list[BatchDelivery]
    queue_waits: list[QueueWait]
    vpn_members: dict[int, frozenset]
    centers: dict[int, VirtualServiceCenter]
    inventory_baseline: str
    inventory_active: str
    inventory_final: str
    redirects_final: dict = field(default_factory=dict)  # (node, addr) -> node
    hosting_final: dict = field(default_factory=dict)    # addr -> node
    exit_status: int = 0

    def delivered_words(self) -> list[int]:
        """Tag words of every event delivered to any center, in log order."""
        words: list[int] = []
        for center in self.centers.values():
            words.extend(d.event.tag_word for d in center.received_log)
        return words


def expand_reads(scenario: Scenario, seed: int) -> list[ReadSpec]:
    """Explicit reads plus seeded expansion of random_reads generators.

    The same (scenario, seed) always yields the same schedule; the result
    is sorted by time with the original order preserved among ties.
    """
    reads = list(scenario.reads)
    rng = random.Random(seed)
    populations = {
        sid: [t.word for t in scenario.tags_of_system(sid)]
        for spec in scenario.random_reads for sid in spec.systems
    }
    for spec in scenario.random_reads:
        for _ in range(spec.count):
            time_ms = rng.uniform(spec.start_ms, spec.end_ms)
            reader_id = spec.readers[rng.randrange(len(spec.readers))]
            system_id = spec.systems[rng.randrange(len(spec.systems))]
            words = populations[system_id]
            reads.append(ReadSpec(time_ms, reader_id, words[rng.randrange(len(words))]))
    reads.sort(key=lambda r: r.time_ms)
    return reads


class _Collector:
    """Accumulates per-system counters while the loop runs."""

    def __init__(self) -> None:
        self.systems: dict[int, SystemMetrics] = {}

    def for_system(self, system_id: int) -> SystemMetrics:
        if system_id not in self.systems:
            self.systems[system_id] = SystemMetrics(system_id)
        return self.systems[system_id]


def run(scenario: Scenario, seed: int = 0,
        mode_override: Mode | None = None) -> RunResult:
    """Execute one scenario: create systems, replay the schedule in time
    order, flush middleware buffers, verify conservation, remove systems.

    Raises InvariantBreach when any accounting or isolation rule fails.
    """
    loop = EventLoop()
    network = OverlayNetwork(loop)
    for node in scenario.nodes:
        network.add_node(node.name, node.service_rate)
    for link in scenario.links:
        network.add_link(link.a, link.b, link.latency_ms)

    server = ManagementServer(network)
    for reader in scenario.readers:
        server.add_physical_reader(reader.reader_id, reader.area, reader.node)

    inventory_baseline = server.inventory_json()

    descriptors = [
        dataclasses.replace(d, mode=mode_override) if mode_override else d
        for d in scenario.systems
    ]
    handles = {d.system_id: server.create_virtual_system(d) for d in descriptors}
    inventory_active = server.inventory_json()
    vpn_members = dict(network.vpns())

    collector = _Collector()
    for d in descriptors:
        collector.for_system(d.system_id)
    deliveries: list[BatchDelivery] = []

    def on_batch_delivered(delivery: BatchDelivery) -> None:
        handle = handles[delivery.batch.system_id]
        handle.center.receive(delivery.batch, delivery.deliver_time_ms,
                              delivery.latency_ms, delivery.record.redirected)
        m = collector.for_system(delivery.batch.system_id)
        n = len(delivery.batch.events)
        if delivery.batch.flushed:
            m.flushed_events += n
        else:
            m.delivered_events += n
        if delivery.record.redirected:
            m.redirected_deliveries += 1
            m.count_message(KIND_REDIRECT)
        m.batch_latencies_ms.append(delivery.latency_ms)
        for event in delivery.batch.events:
            m.event_latencies_ms.append(delivery.deliver_time_ms - event.time_ms)
        deliveries.append(delivery)

    def dispatch_batch(batch: Batch) -> None:
        handle = handles[batch.system_id]
        mode = mode_override or handle.descriptor.mode
        m = collector.for_system(batch.system_id)
        if batch.flushed:
            m.flushed_batches += 1
        else:
            m.batches_sent += 1
        m.count_message(KIND_DATA)
        if mode is Mode.TWO_STEP:
            m.ons_queries += 1
            m.count_message(KIND_ONS_QUERY)
            m.count_message(KIND_ONS_RESPONSE)
        pending = pipelines.dispatch(handle, batch, network, mode)
        pending.on_complete(on_batch_delivered)

    def do_read(read: ReadSpec) -> None:
        outcome = server.reader_on_read(read.reader_id, read.word, loop.now)
        m = collector.for_system(outcome.system_id)
        m.reads_total += 1
        if outcome.disposition is ReadDisposition.NO_VIRTUAL_READER:
            m.drops_no_virtual_reader += 1
            return
        if outcome.disposition is ReadDisposition.POLICY_DISCARD:
            m.count_discard(outcome.verdict.discard_reason)
            return
        m.forwards += 1
        m.count_message(KIND_READER_TO_MIDDLEWARE)
        scheme = outcome.verdict.encryption_scheme
        m.forwards_by_encryption_scheme[scheme] = (
            m.forwards_by_encryption_scheme.get(scheme, 0) + 1)
        if outcome.batch is not None:
            dispatch_batch(outcome.batch)

    def run_event(event) -> None:
        if isinstance(event, MigrateEvent):
            network.migrate_center(event.address, event.old_host,
                                   event.new_host, event.propagate)
        elif isinstance(event, SplitEvent):
            network.split_center(dict(event.partition))
        elif isinstance(event, MaintenanceEvent):
            network.maintenance_update(event.address, event.host, event.scope)
        elif isinstance(event, BurstEvent):
            network.inject_filler(event.node, event.count, event.priority)

    reads = expand_reads(scenario, seed)
    for read in reads:
        loop.schedule(read.time_ms, lambda r=read: do_read(r))
    for event in sorted(scenario.events, key=lambda e: e.time_ms):
        loop.schedule(event.time_ms, lambda e=event: run_event(e))

    end_time = 0.0
    if reads:
        end_time = max(end_time, max(r.time_ms for r in reads))
    if scenario.events:
        end_time = max(end_time, max(e.time_ms for e in scenario.events))

    def flush_all() -> None:
        for handle in handles.values():
            batch = handle.middleware.flush()
            if batch is not None:
                dispatch_batch(batch)

    loop.schedule(end_time, flush_all)
    loop.run()

    # Quiescence accounting and conservation.
    for system_id, handle in handles.items():
        m = collector.for_system(system_id)
        m.buffered_events = len(handle.middleware.buffer)
        m.center_processing_ms = handle.center.processing_ms
        if not m.conservation_holds():
            raise InvariantBreach(
                f"conservation failed for system {system_id}: "
                f"reads={m.reads_total} nvr={m.drops_no_virtual_reader} "
                f"policy={m.drops_policy_total} buffered={m.buffered_events} "
                f"delivered={m.delivered_events} flushed={m.flushed_events}")
    for system_id, m in collector.systems.items():
        if system_id not in handles and not m.conservation_holds():
            raise InvariantBreach(
                f"conservation failed for foreign system {system_id}")
    if network.priority_inversions:
        raise InvariantBreach(
            f"{network.priority_inversions} priority inversion(s) observed")

    report = MetricsReport(
        scenario_name=scenario.name,
        scenario_sha256=scenario.source_sha256,
        seed=seed,
        mode_label=mode_override.value if mode_override else "as-declared",
        systems=collector.systems,
        total_priority_inversions=network.priority_inversions,
        simulated_ms=loop.now,
        generators=tuple(s.source_line for s in scenario.random_reads),
    )

    centers = {sid: h.center for sid, h in handles.items()}
    redirects_final = network.redirect_entries()
    hosting_final = network.hosting_map()
    for system_id in list(handles):
        server.remove_virtual_system(system_id)
    inventory_final = server.inventory_json()

    return RunResult(
        scenario=scenario,
        seed=seed,
        mode_label=report.mode_label,
        report=report,
        deliveries=deliveries,
        queue_waits=list(network.queue_waits),
        vpn_members=vpn_members,
        centers=centers,
        inventory_baseline=inventory_baseline,
        inventory_active=inventory_active,
        inventory_final=inventory_final,
    )


def compare_report_dict(two_step: RunResult, direct: RunResult) -> dict:
    """Paired metrics plus per-system deltas (two-step minus direct)."""
    deltas = {}
    for sid in sorted(set(two_step.report.systems) | set(direct.report.systems)):
        ts = two_step.report.systems.get(sid)
        dr = direct.report.systems.get(sid)
        if ts is None or dr is None:
            continue
        ts_lat = ts.batch_latencies_ms
        dr_lat = dr.batch_latencies_ms
        deltas[str(sid)] = {
            "ons_queries_saved": ts.ons_queries - dr.ons_queries,
            "batch_latency_mean_saved_ms": (
                None if not ts_lat or not dr_lat
                else sum(ts_lat) / len(ts_lat) - sum(dr_lat) / len(dr_lat)),
        }
    return {
        "report_version": two_step.report.to_dict()["report_version"],
        "mode": "compare",
        "scenario": two_step.scenario.name,
        "scenario_sha256": two_step.scenario.source_sha256,
        "seed": two_step.seed,
        "two_step": two_step.report.to_dict(),
        "direct": direct.report.to_dict(),
        "delta": deltas,
    }
