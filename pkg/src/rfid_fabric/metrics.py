"""Quantitative output of a simulation run.

One SystemMetrics block per service system plus run-level totals.  The
conservation identity (every emitted read is accounted for exactly once as
a drop, a buffered event or a delivery) is checked before a report leaves
the runner.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .policy import DiscardReason

REPORT_VERSION = 1


def percentile(values: list[float], fraction: float) -> float:
    """Nearest-rank percentile of a non-empty list; deterministic."""
    ordered = sorted(values)
    if not ordered:
        raise ValueError("percentile of empty list")
    rank = max(1, math.ceil(len(ordered) * fraction))
    return ordered[rank - 1]


def latency_stats(values: list[float]) -> dict:
    if not values:
        return {"count": 0, "mean": None, "p50": None, "p95": None, "max": None}
    return {
        "count": len(values),
        "mean": sum(values) / len(values),
        "p50": percentile(values, 0.50),
        "p95": percentile(values, 0.95),
        "max": max(values),
    }


@dataclass
class SystemMetrics:
    system_id: int
    reads_total: int = 0
    drops_no_virtual_reader: int = 0
    drops_policy: dict[str, int] = field(default_factory=dict)
    forwards: int = 0
    batches_sent: int = 0
    flushed_batches: int = 0
    delivered_events: int = 0  # events delivered from threshold batches
    flushed_events: int = 0    # events delivered via the end-of-run flush
    buffered_events: int = 0   # still in middleware when the report is cut
    ons_queries: int = 0
    redirected_deliveries: int = 0
    messages: dict[str, int] = field(default_factory=dict)
    center_processing_ms: float = 0.0
    priority_inversions: int = 0
    forwards_by_encryption_scheme: dict[int, int] = field(default_factory=dict)
    batch_latencies_ms: list[float] = field(default_factory=list)
    event_latencies_ms: list[float] = field(default_factory=list)

    def count_discard(self, reason: DiscardReason) -> None:
        key = reason.value
        self.drops_policy[key] = self.drops_policy.get(key, 0) + 1

    def count_message(self, kind: str, n: int = 1) -> None:
        self.messages[kind] = self.messages.get(kind, 0) + n

    @property
    def drops_policy_total(self) -> int:
        return sum(self.drops_policy.values())

    def conservation_holds(self) -> bool:
        """reads = no-virtual-reader + policy drops + buffered + delivered."""
        return self.reads_total == (
            self.drops_no_virtual_reader + self.drops_policy_total
            + self.buffered_events + self.delivered_events + self.flushed_events)

    def to_dict(self) -> dict:
        return {
            "system_id": self.system_id,
            "reads_total": self.reads_total,
            "drops_no_virtual_reader": self.drops_no_virtual_reader,
            "drops_policy": dict(sorted(self.drops_policy.items())),
            "drops_policy_total": self.drops_policy_total,
            "forwards": self.forwards,
            "batches_sent": self.batches_sent,
            "flushed_batches": self.flushed_batches,
            "delivered_events": self.delivered_events,
            "flushed_events": self.flushed_events,
            "buffered_events": self.buffered_events,
            "ons_queries": self.ons_queries,
            "redirected_deliveries": self.redirected_deliveries,
            "messages": dict(sorted(self.messages.items())),
            "center_processing_ms": self.center_processing_ms,
            "priority_inversions": self.priority_inversions,
            "forwards_by_encryption_scheme": {
                str(k): v for k, v in sorted(self.forwards_by_encryption_scheme.items())},
            "batch_latency_ms": latency_stats(self.batch_latencies_ms),
            "event_latency_ms": latency_stats(self.event_latencies_ms),
            "conservation_ok": self.conservation_holds(),
        }


@dataclass
class MetricsReport:
    """Per-system metrics plus run identification, serializable three ways."""

    scenario_name: str
    scenario_sha256: str
    seed: int
    mode_label: str
    systems: dict[int, SystemMetrics]
    total_priority_inversions: int = 0
    simulated_ms: float = 0.0
    generators: tuple[str, ...] = ()  # random_reads specs, for reproducibility

    def to_dict(self) -> dict:
        return {
            "report_version": REPORT_VERSION,
            "scenario": self.scenario_name,
            "scenario_sha256": self.scenario_sha256,
            "seed": self.seed,
            "mode": self.mode_label,
            "simulated_ms": self.simulated_ms,
            "generators": list(self.generators),
            "total_priority_inversions": self.total_priority_inversions,
            "systems": {str(sid): m.to_dict()
                        for sid, m in sorted(self.systems.items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_text(self) -> str:
        lines = [
            f"scenario: {self.scenario_name}  seed: {self.seed}  mode: {self.mode_label}",
            f"scenario sha256: {self.scenario_sha256}",
            f"simulated time: {self.simulated_ms} ms   "
            f"priority inversions: {self.total_priority_inversions}",
            "",
        ]
        header = (f"{'system':>6} {'reads':>7} {'no-vr':>6} {'policy':>7} "
                  f"{'batches':>8} {'flush':>6} {'deliv':>7} {'ons':>5} "
                  f"{'redir':>6} {'lat-mean':>9} {'lat-p95':>9} {'proc-ms':>9}")
        lines.append(header)
        lines.append("-" * len(header))
        for sid, m in sorted(self.systems.items()):
            stats = latency_stats(m.batch_latencies_ms)
            mean = "-" if stats["mean"] is None else f"{stats['mean']:.3f}"
            p95 = "-" if stats["p95"] is None else f"{stats['p95']:.3f}"
            lines.append(
                f"{sid:>6} {m.reads_total:>7} {m.drops_no_virtual_reader:>6} "
                f"{m.drops_policy_total:>7} {m.batches_sent:>8} "
                f"{m.flushed_batches:>6} "
                f"{m.delivered_events + m.flushed_events:>7} "
                f"{m.ons_queries:>5} {m.redirected_deliveries:>6} "
                f"{mean:>9} {p95:>9} {m.center_processing_ms:>9.3f}")
        lines.append("")
        return "\n".join(lines)

    CSV_COLUMNS = (
        "system_id,reads_total,drops_no_virtual_reader,drops_policy_total,"
        "forwards,batches_sent,flushed_batches,delivered_events,flushed_events,"
        "buffered_events,ons_queries,redirected_deliveries,center_processing_ms,"
        "priority_inversions,batch_latency_mean,batch_latency_p50,"
        "batch_latency_p95,batch_latency_max")

    def to_csv(self) -> str:
        rows = [self.CSV_COLUMNS]
        for sid, m in sorted(self.systems.items()):
            stats = latency_stats(m.batch_latencies_ms)

            def cell(v):
                return "" if v is None else str(v)

            rows.append(",".join([
                str(sid), str(m.reads_total), str(m.drops_no_virtual_reader),
                str(m.drops_policy_total), str(m.forwards), str(m.batches_sent),
                str(m.flushed_batches), str(m.delivered_events),
                str(m.flushed_events), str(m.buffered_events),
                str(m.ons_queries), str(m.redirected_deliveries),
                str(m.center_processing_ms), str(m.priority_inversions),
                cell(stats["mean"]), cell(stats["p50"]), cell(stats["p95"]),
                cell(stats["max"]),
            ]))
        return "\n".join(rows) + "\n"
