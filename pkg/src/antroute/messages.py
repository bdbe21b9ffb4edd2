"""Seed messages: the three message kinds flooded during route discovery.

A payment request is identified by a 32-byte value r derived by hashing the
payer half onto the payee half (order matters). Pheromone seeds flood
outward from both endpoints; a node holding both directions promotes the
request to a matched seed, which travels back to the payer; the payer
confirms exactly one match, locking the path.

Wire format is a fixed-width big-endian frame:

    tag(1) | r(32) | counter(4) | amount(8) | max_fee(8) | current_fee(8)

with an extra matching_id(8) for matched and confirmed seeds. The tag byte
packs kind and direction; the kinds also carry logical prefix lengths of
1, 2 and 3 bits so each promotion extends the previous form by one bit.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from enum import IntEnum

from .kernels import pack_frame, unpack_frame

R_BYTES = 32  # width of the shared request id
HALF_BYTES = 16  # width of each endpoint's random half
COUNTER_MAX = 2**32 - 1
AMOUNT_MAX = 2**64 - 1
PHEROMONE_FRAME_BYTES = 61
MATCHED_FRAME_BYTES = 69


class SeedKind(IntEnum):
    PHEROMONE = 0
    MATCHED = 1
    CONFIRMED = 2

    @property
    def prefix_bits(self) -> int:
        # logical prefix length: each promotion appends one bit
        return self.value + 1


class Direction(IntEnum):
    A = 0  # flooded from the payer, travels with the payment flow
    B = 1  # flooded from the payee, travels against it

    def conjugate(self) -> "Direction":
        return Direction.B if self is Direction.A else Direction.A


class CodecError(ValueError):
    """Raised when a frame cannot be decoded into a valid seed message."""


@dataclass(frozen=True, slots=True)
class SeedMessage:
    kind: SeedKind
    direction: Direction
    r: bytes
    counter: int
    amount: int
    max_fee: int
    current_fee: int
    matching_id: int | None = None

    def __post_init__(self) -> None:
        if len(self.r) != R_BYTES:
            raise ValueError(f"r must be {R_BYTES} bytes, got {len(self.r)}")
        if not 0 <= self.counter <= COUNTER_MAX:
            raise ValueError(f"counter out of range: {self.counter}")
        for name in ("amount", "max_fee", "current_fee"):
            value = getattr(self, name)
            if not 0 <= value <= AMOUNT_MAX:
                raise ValueError(f"{name} out of range: {value}")
        if self.kind is SeedKind.PHEROMONE:
            if self.matching_id is not None:
                raise ValueError("pheromone seeds carry no matching_id")
        else:
            if self.matching_id is None:
                raise ValueError(f"{self.kind.name} seeds require a matching_id")
            if not 0 <= self.matching_id <= AMOUNT_MAX:
                raise ValueError(f"matching_id out of range: {self.matching_id}")


def derive_request_id(r_payer: bytes, r_payee: bytes) -> bytes:
    """Hash the two 16-byte endpoint halves into the shared request id."""
    if len(r_payer) != HALF_BYTES or len(r_payee) != HALF_BYTES:
        raise ValueError(f"endpoint halves must be {HALF_BYTES} bytes")
    return hashlib.sha256(r_payer + r_payee).digest()


def make_pheromone_pair(
    r_payer: bytes,
    r_payee: bytes,
    amount: int,
    max_fee: int,
) -> tuple[SeedMessage, SeedMessage]:
    """Build the payer-side and payee-side pheromone seeds for one request.

    Both seeds share r = sha256(r_payer || r_payee) and differ only in
    direction. Counters start at 0; the originating node substitutes its
    own starting counter before flooding.
    """
    r = derive_request_id(r_payer, r_payee)
    seed_a = SeedMessage(SeedKind.PHEROMONE, Direction.A, r, 0, amount, max_fee, 0)
    seed_b = SeedMessage(SeedKind.PHEROMONE, Direction.B, r, 0, amount, max_fee, 0)
    return seed_a, seed_b


def conjugate(msg: SeedMessage) -> SeedMessage:
    """Flip the direction of a pheromone seed (what a match looks for)."""
    if msg.kind is not SeedKind.PHEROMONE:
        raise ValueError("only pheromone seeds have a conjugate")
    return replace(msg, direction=msg.direction.conjugate())


def promote_to_matched(msg: SeedMessage, matching_id: int, total_fee: int) -> SeedMessage:
    """Promote a pheromone seed to a matched seed carrying the path fee."""
    if msg.kind is not SeedKind.PHEROMONE:
        raise ValueError("only pheromone seeds can be matched")
    if total_fee > msg.max_fee:
        raise ValueError(f"total_fee {total_fee} exceeds max_fee {msg.max_fee}")
    return replace(
        msg,
        kind=SeedKind.MATCHED,
        matching_id=matching_id,
        current_fee=total_fee,
    )


def promote_to_confirmed(msg: SeedMessage) -> SeedMessage:
    """Promote a matched seed to the confirmed seed that locks the path."""
    if msg.kind is not SeedKind.MATCHED:
        raise ValueError("only matched seeds can be confirmed")
    return replace(msg, kind=SeedKind.CONFIRMED)


def logical_bit_length(msg: SeedMessage) -> int:
    """Length of the logical seed form: prefix bits plus the 256-bit r."""
    return msg.kind.prefix_bits + R_BYTES * 8


def encode(msg: SeedMessage) -> bytes:
    """Serialize to the canonical frame (61 bytes, 69 with matching_id)."""
    return pack_frame(
        msg.kind.value,
        msg.direction.value,
        msg.r,
        msg.counter,
        msg.amount,
        msg.max_fee,
        msg.current_fee,
        msg.matching_id,
    )


def decode(frame: bytes) -> SeedMessage:
    """Parse a canonical frame; reject anything malformed."""
    try:
        kind, direction, r, counter, amount, max_fee, current_fee, matching_id = (
            unpack_frame(frame)
        )
    except ValueError as exc:
        raise CodecError(str(exc)) from None
    return SeedMessage(
        SeedKind(kind),
        Direction(direction),
        r,
        counter,
        amount,
        max_fee,
        current_fee,
        matching_id,
    )
