"""Misbehaving node variants for robustness experiments.

Each adversary overrides the smallest possible slice of honest behavior;
everything it does not override runs the normal protocol code.
"""

from __future__ import annotations

from .. import audit
from ..node import Behavior, Node


class CounterCheat(Behavior):
    """Under-reports counters by delta to look closer than it is.

    During the trail replay audit it covers its tracks the only way it
    can: deleting the oldest tokens before appending its own. Either the
    count no longer matches at the payee or a robbed relay fails to find
    its token on replay.
    """

    name = "counter_cheat"

    def __init__(self, delta: int):
        if delta < 1:
            raise ValueError("delta must be >= 1")
        self.delta = delta

    def relay_counter(self, node: Node, received: int, honest_next: int) -> int:
        return max(0, honest_next - self.delta)

    def span_claim(self, node: Node, honest_span: int) -> int:
        return max(0, honest_span - self.delta)

    def audit_append(self, node: Node, matching_id: int, trail: tuple) -> tuple:
        cut = min(self.delta, len(trail))
        token = audit.fresh_token(node.rng)
        node.audit_tokens[matching_id] = token
        return audit.append_token(trail[cut:], token)


class TransparentCheat(Behavior):
    """Never increments counters, never appends or consumes a token.

    Leaves the count and the replay both self-consistent, so neither
    audit check can see it. The honest span claim at a matcher still
    reflects whatever deflated counters reached it.
    """

    name = "transparent_cheat"

    def relay_counter(self, node: Node, received: int, honest_next: int) -> int:
        return received

    def self_increment(self, node: Node) -> int:
        # consistent with never incrementing: as a matcher it omits itself
        return 0

    def audit_append(self, node: Node, matching_id: int, trail: tuple) -> tuple:
        return trail

    def audit_replay(self, node: Node, matching_id: int, trail: tuple) -> tuple:
        return trail


class FeeInflate(Behavior):
    """Adds delta to the fee total when forwarding matched seeds."""

    name = "fee_inflate"

    def __init__(self, delta: int):
        if delta < 1:
            raise ValueError("delta must be >= 1")
        self.delta = delta

    def matched_fee_out(self, node: Node, fee: int) -> int:
        return fee + self.delta

    def audit_append(self, node: Node, matching_id: int, trail: tuple) -> tuple:
        # fees are its game, counters are not: appends honestly
        return super().audit_append(node, matching_id, trail)


class Dropper(Behavior):
    """Silently discards each incoming message with probability p."""

    name = "dropper"

    def __init__(self, p: float):
        if not 0.0 <= p <= 1.0:
            raise ValueError("p must be in [0, 1]")
        self.p = p

    def drops(self, node: Node, kind: str) -> bool:
        return node.rng.random() < self.p


def make_behavior(spec: dict) -> Behavior:
    kind = spec["kind"]
    if kind == "counter_cheat":
        return CounterCheat(spec["delta"])
    if kind == "transparent_cheat":
        return TransparentCheat()
    if kind == "fee_inflate":
        return FeeInflate(spec["delta"])
    if kind == "dropper":
        return Dropper(spec["p"])
    raise ValueError(f"unknown adversary kind {kind!r}")
