"""The two competing end-to-end dispatch flows.

Two-step: the middleware first asks the name service for the center's
address (a round trip plus lookup processing), then forwards the batch.
Direct: the center's virtual network address is bit-sliced straight out of
the tag word and the batch is forwarded immediately, with no resolution
query at all.  Both flows ride the same overlay, so redirects and queues
apply identically; only the resolution step differs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .codec import extract_service_address
from .elements import Batch, Mode, SystemHandle
from .errors import OnsNotFound, ResolutionFailed
from .network import (
    KIND_ONS_QUERY,
    KIND_ONS_RESPONSE,
    DeliveryRecord,
    OverlayNetwork,
    Packet,
    PacketRecord,
)

__all__ = [
    "Mode", "BatchDelivery", "PendingBatch",
    "dispatch_two_step", "dispatch_direct", "compare_modes",
]


@dataclass(frozen=True, slots=True)
class BatchDelivery:
    """Completed dispatch of one batch, however it was resolved."""

    batch: Batch
    mode: Mode
    destination: int
    dispatch_time_ms: float
    deliver_time_ms: float
    latency_ms: float           # dispatch -> center, resolution legs included
    ons_query: bool
    record: DeliveryRecord      # the data packet's network record


class PendingBatch:
    """Handle for an in-flight batch; result appears at center delivery."""

    def __init__(self, batch: Batch, mode: Mode):
        self.batch = batch
        self.mode = mode
        self.result: BatchDelivery | None = None
        self._callbacks: list[Callable[[BatchDelivery], None]] = []

    def on_complete(self, callback: Callable[[BatchDelivery], None]) -> None:
        if self.result is not None:
            callback(self.result)
        else:
            self._callbacks.append(callback)

    def _complete(self, result: BatchDelivery) -> None:
        self.result = result
        for callback in self._callbacks:
            callback(result)
        self._callbacks.clear()


def _packet_for(handle: SystemHandle, batch: Batch, destination: int) -> Packet:
    records = tuple(
        PacketRecord(
            tag_word=e.tag_word, system_id=e.system_id,
            policy_number=e.policy_number, read_day=e.day,
            read_minute=e.minute, read_area=e.reader_area)
        for e in batch.events)
    priority = any(e.verdict.priority for e in batch.events)
    return Packet(vpn_id=handle.vpn_id, destination=destination,
                  priority=priority, data=records)


def _finish(pending: PendingBatch, batch: Batch, destination: int,
            dispatch_time: float, ons_query: bool, record: DeliveryRecord) -> None:
    pending._complete(BatchDelivery(
        batch=batch, mode=pending.mode, destination=destination,
        dispatch_time_ms=dispatch_time, deliver_time_ms=record.deliver_time_ms,
        latency_ms=record.deliver_time_ms - dispatch_time,
        ons_query=ons_query, record=record))


def dispatch_two_step(handle: SystemHandle, batch: Batch,
                      network: OverlayNetwork) -> PendingBatch:
    """Resolve the center address through the name service, then forward.

    Latency: round trip middleware<->name service, plus lookup processing,
    plus the one-way data path.  One query per batch.
    """
    try:
        destination, lookup_ms = handle.ons.lookup(handle.system_id)
    except OnsNotFound as exc:
        raise ResolutionFailed(str(exc)) from exc
    mw_node, ons_node = handle.middleware.node, handle.ons.node
    dispatch_time = network.loop.now
    pending = PendingBatch(batch, Mode.TWO_STEP)

    def query_arrived(_job) -> None:
        network.loop.schedule_after(lookup_ms, send_response)

    def send_response() -> None:
        network.transmit(handle.vpn_id, ons_node, mw_node, priority=False,
                         kind=KIND_ONS_RESPONSE, system_id=handle.system_id,
                         on_arrival=response_arrived)

    def response_arrived(_job) -> None:
        packet = _packet_for(handle, batch, destination)
        delivery = network.send(packet, mw_node)
        delivery.on_delivered(
            lambda record: _finish(pending, batch, destination,
                                   dispatch_time, True, record))

    network.transmit(handle.vpn_id, mw_node, ons_node, priority=False,
                     kind=KIND_ONS_QUERY, system_id=handle.system_id,
                     on_arrival=query_arrived)
    return pending


def dispatch_direct(handle: SystemHandle, batch: Batch,
                    network: OverlayNetwork) -> PendingBatch:
    """Forward straight to the address embedded in the tag words.

    No name-service query.  All events in one batch must embed the same
    service address; mixed batches are a scenario authoring error.
    """
    assert batch.events, "cannot dispatch an empty batch"
    addresses = {extract_service_address(e.tag_word) for e in batch.events}
    assert len(addresses) == 1, (
        f"batch mixes service addresses {sorted(addresses)}; "
        "one batch must target one address")
    destination = addresses.pop()
    dispatch_time = network.loop.now
    pending = PendingBatch(batch, Mode.DIRECT)
    packet = _packet_for(handle, batch, destination)
    delivery = network.send(packet, handle.middleware.node)
    delivery.on_delivered(
        lambda record: _finish(pending, batch, destination, dispatch_time,
                               False, record))
    return pending


def dispatch(handle: SystemHandle, batch: Batch, network: OverlayNetwork,
             mode: Mode | None = None) -> PendingBatch:
    """Dispatch by the system's bound mode unless overridden."""
    mode = mode or handle.middleware.mode
    if mode is Mode.TWO_STEP:
        return dispatch_two_step(handle, batch, network)
    return dispatch_direct(handle, batch, network)


def compare_modes(scenario, seed: int = 0):
    """Run one scenario once per mode with identical seeds.

    Returns (two_step_result, direct_result); content delivered to centers
    is identical across modes, only timing and load differ.
    """
    from .runner import run  # local import; runner builds on this module

    two_step = run(scenario, seed=seed, mode_override=Mode.TWO_STEP)
    direct = run(scenario, seed=seed, mode_override=Mode.DIRECT)
    return two_step, direct
