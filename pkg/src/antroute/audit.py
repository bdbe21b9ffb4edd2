"""Counting audit for counter honesty on a locked path.

Every node that relays the path-locking seed appends a random token to a
trail that rides along with it. The payee checks that the trail length
matches the hop count the seed claims; the payer then replays the trail
along the path and each relay must recognize and consume its own token
from the front. A relay that lied about counters either leaves the count
wrong or destroys someone else's token, and gets caught in one of the two
checks. A relay that never increments and never appends stays invisible
to both.
"""

from __future__ import annotations

Trail = tuple[int, ...]

EMPTY_TRAIL: Trail = ()


class CheatDetected(Exception):
    """A replayed trail did not start with the expected token."""


def fresh_token(rng) -> int:
    return rng.getrandbits(64)


def append_token(trail: Trail, token: int) -> Trail:
    """Add one relay's token to the end of the trail."""
    return trail + (token,)


def verify_count(trail: Trail, claimed_hops: int) -> bool:
    """Payee-side check: one token per claimed relay hop."""
    return len(trail) == claimed_hops


def replay_step(trail: Trail, token: int) -> Trail:
    """Consume this relay's token from the front of the replayed trail."""
    if not trail or trail[0] != token:
        raise CheatDetected("trail does not start with this relay's token")
    return trail[1:]
