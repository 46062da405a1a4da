"""Virtualized RFID tag infrastructure network: protocol library and
deterministic simulator.

One shared physical substrate (readers, middleware, name service, network,
service centers) hosts many service systems through per-system virtual
elements.  Tags carry a 96-bit word embedding the owning system, a
conditional-processing policy number and the service center's virtual
network address, which enables direct transmission without a resolution
query and survives center migration and splitting via re-transfer.
"""

from .codec import (
    TagId,
    TagWord,
    decode,
    encode,
    extract_service_address,
    format_address,
    format_hex,
    make_word,
    parse_address,
    parse_hex,
)
from .elements import (
    Batch,
    ManagementServer,
    Mode,
    ReadDisposition,
    ReadEvent,
    ReadOutcome,
    ServiceSystemDescriptor,
    SystemHandle,
    VirtualMiddleware,
    VirtualOns,
    VirtualServiceCenter,
)
from .errors import FabricError, InvariantBreach, MalformedWord
from .events import EventLoop
from .metrics import MetricsReport, SystemMetrics
from .network import (
    CongestionQueue,
    DeliveryRecord,
    OverlayNetwork,
    Packet,
    PacketRecord,
)
from .pipelines import (
    BatchDelivery,
    compare_modes,
    dispatch_direct,
    dispatch_two_step,
)
from .policy import (
    AreaCondition,
    AreaSense,
    DiscardReason,
    PolicyDefinition,
    PolicyTable,
    PolicyVerdict,
    ReadContext,
    TimeWindow,
    evaluate,
    in_window,
)
from .runner import RunResult, run
from .scenario import (
    Scenario,
    bundled_scenario_names,
    load_bundled_scenario,
    load_scenario,
    parse_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "AreaCondition", "AreaSense", "Batch", "BatchDelivery", "CongestionQueue",
    "DeliveryRecord", "DiscardReason", "EventLoop", "FabricError",
    "InvariantBreach", "MalformedWord", "ManagementServer", "MetricsReport",
    "Mode", "OverlayNetwork", "Packet", "PacketRecord", "PolicyDefinition",
    "PolicyTable", "PolicyVerdict", "ReadContext", "ReadDisposition",
    "ReadEvent", "ReadOutcome", "RunResult", "Scenario",
    "ServiceSystemDescriptor", "SystemHandle", "SystemMetrics", "TagId",
    "TagWord", "TimeWindow", "VirtualMiddleware", "VirtualOns",
    "VirtualServiceCenter", "bundled_scenario_names", "compare_modes",
    "decode", "dispatch_direct", "dispatch_two_step", "encode", "evaluate",
    "extract_service_address", "format_address", "format_hex", "in_window",
    "load_bundled_scenario", "load_scenario", "make_word", "parse_address",
    "parse_hex", "parse_scenario", "run",
]
