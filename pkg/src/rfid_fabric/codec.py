"""96-bit tag word codec.

A tag identity packs four fields into one 96-bit word, big-endian:

    system_id (24) | policy_number (8) | service_address (32) | serial (32)

The service address is an IPv4-style virtual network address of the
logical service center.  It is part of the tag identity, so a plain
bit-slice recovers it without decoding the whole word; that is what makes
direct transmission possible.  The canonical textual form of a word is 24
lowercase hex digits.
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass

from .errors import MalformedWord

# A TagWord is a plain int in [0, 2**96).  Kept as an alias rather than a
# wrapper class: words are compared, hashed and stored in bulk.
TagWord = int

WORD_BITS = 96
HEX_DIGITS = WORD_BITS // 4

SYSTEM_ID_BITS = 24
POLICY_NUMBER_BITS = 8
ADDRESS_BITS = 32
SERIAL_BITS = 32

_SYSTEM_SHIFT = POLICY_NUMBER_BITS + ADDRESS_BITS + SERIAL_BITS  # 72
_POLICY_SHIFT = ADDRESS_BITS + SERIAL_BITS  # 64
_ADDRESS_SHIFT = SERIAL_BITS  # 32

SYSTEM_ID_MAX = (1 << SYSTEM_ID_BITS) - 1
POLICY_NUMBER_MAX = (1 << POLICY_NUMBER_BITS) - 1
ADDRESS_MAX = (1 << ADDRESS_BITS) - 1
SERIAL_MAX = (1 << SERIAL_BITS) - 1


def _check_range(name: str, value: int, maximum: int) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise TypeError(f"{name} must be an int, got {type(value).__name__}")
    if not 0 <= value <= maximum:
        raise ValueError(f"{name} {value} outside [0, {maximum}]")
    return value


@dataclass(frozen=True, slots=True)
class TagId:
    """Decoded tag identity.

    system_id: which service system owns the tag (0 = unassigned).
    policy_number: conditional-processing rule selector (0 = always forward).
    service_address: virtual network address of the service center.
    serial: object serial, unique within one system.
    """

    system_id: int
    policy_number: int
    service_address: int
    serial: int

    def __post_init__(self) -> None:
        _check_range("system_id", self.system_id, SYSTEM_ID_MAX)
        _check_range("policy_number", self.policy_number, POLICY_NUMBER_MAX)
        _check_range("service_address", self.service_address, ADDRESS_MAX)
        _check_range("serial", self.serial, SERIAL_MAX)


def encode(tag: TagId) -> TagWord:
    """Pack a TagId into its unique 96-bit word."""
    return (
        (tag.system_id << _SYSTEM_SHIFT)
        | (tag.policy_number << _POLICY_SHIFT)
        | (tag.service_address << _ADDRESS_SHIFT)
        | tag.serial
    )


def decode(word: TagWord) -> TagId:
    """Unpack a 96-bit word; inverse of encode.

    Raises MalformedWord if the value does not fit in 96 bits.
    """
    if not isinstance(word, int) or isinstance(word, bool):
        raise MalformedWord(f"tag word must be an int, got {type(word).__name__}")
    if not 0 <= word < (1 << WORD_BITS):
        raise MalformedWord(f"tag word out of 96-bit range: {word:#x}")
    return TagId(
        system_id=(word >> _SYSTEM_SHIFT) & SYSTEM_ID_MAX,
        policy_number=(word >> _POLICY_SHIFT) & POLICY_NUMBER_MAX,
        service_address=(word >> _ADDRESS_SHIFT) & ADDRESS_MAX,
        serial=word & SERIAL_MAX,
    )


def extract_service_address(word: TagWord) -> int:
    """Bit-slice the embedded service center address out of a word.

    Agrees with decode(word).service_address by construction; exists so the
    forwarding path does not pay for a full decode.
    """
    return (word >> _ADDRESS_SHIFT) & ADDRESS_MAX


def format_hex(word: TagWord) -> str:
    """Canonical textual form: exactly 24 lowercase hex digits."""
    if not 0 <= word < (1 << WORD_BITS):
        raise MalformedWord(f"tag word out of 96-bit range: {word:#x}")
    return format(word, f"0{HEX_DIGITS}x")


def parse_hex(text: str) -> TagWord:
    """Parse the 24-hex-digit textual form of a tag word.

    Raises MalformedWord on wrong length or non-hex input.
    """
    if len(text) != HEX_DIGITS:
        raise MalformedWord(f"expected {HEX_DIGITS} hex digits, got {len(text)}")
    try:
        return int(text, 16)
    except ValueError as exc:
        raise MalformedWord(f"not hexadecimal: {text!r}") from exc


def format_address(value: int) -> str:
    """Dotted-quad form of a 32-bit virtual network address."""
    return str(ipaddress.IPv4Address(value))


def parse_address(text: str) -> int:
    """Parse a dotted-quad virtual network address into its 32-bit value."""
    return int(ipaddress.IPv4Address(text))


def make_word(system_id: int, policy_number: int, service_address: int | str,
              serial: int) -> TagWord:
    """Convenience constructor; accepts the address as int or dotted quad."""
    if isinstance(service_address, str):
        service_address = parse_address(service_address)
    return encode(TagId(system_id, policy_number, service_address, serial))
