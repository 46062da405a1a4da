"""Exception hierarchy for the rfid_fabric package.

Everything raised on purpose derives from FabricError so callers can catch
one base class at the boundary.  Simulation rule violations that must abort
a run raise InvariantBreach instead of returning an error code.
"""


class FabricError(Exception):
    """Base class for all package errors."""


# --- tag word codec -------------------------------------------------------

class MalformedWord(FabricError):
    """Input is not a valid 96-bit tag word (wrong length or not hex)."""


# --- policy engine --------------------------------------------------------

class ReservedPolicyNumber(FabricError):
    """Policy number 0 is reserved for unconditional forwarding."""


# --- virtual element lifecycle --------------------------------------------

class DuplicateSystem(FabricError):
    """A service system with this id is already active."""


class UncoveredArea(FabricError):
    """A covered area has no physical reader installed."""


class AddressInUse(FabricError):
    """A virtual network address is already allocated to another system."""


class UnknownSystem(FabricError):
    """No active service system with this id."""


class SystemMismatch(FabricError):
    """An event was handed to an element of a different service system."""


class OnsNotFound(FabricError):
    """The name service has no entry for the requested system."""


# --- overlay network ------------------------------------------------------

class Unroutable(FabricError):
    """The sender's address table has no entry for the destination."""


class VpnViolation(FabricError):
    """No path to the destination exists inside the packet's VPN."""


class UnknownNode(FabricError):
    """Referenced node does not exist in the topology."""


class NotHostedHere(FabricError):
    """Migration source node does not currently host the address."""


class PartitionMismatch(FabricError):
    """Split partition does not cover exactly the hosted address set."""


# --- transmission pipelines -----------------------------------------------

class ResolutionFailed(FabricError):
    """Two-step dispatch could not resolve the service center address."""


# --- scenario ingestion and runs ------------------------------------------

class ScenarioError(FabricError):
    """Base class for scenario file problems."""


class ParseError(ScenarioError):
    """Scenario text could not be parsed.  Carries the offending line."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no
        self.message = message


class ValidationError(ScenarioError):
    """A parsed scenario contains a dangling or inconsistent reference."""

    def __init__(self, reference: str, reason: str):
        super().__init__(f"{reference}: {reason}")
        self.reference = reference
        self.reason = reason


class InvariantBreach(FabricError):
    """A simulation invariant failed; the run is aborted."""
