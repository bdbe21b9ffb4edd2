"""Per-node protocol state machine.

Every node runs the same logic: remember seeds, rebroadcast first sights
and counter improvements, match conjugate pairs, relay matched seeds back
toward the payer, and lock the path when the confirmed seed passes. The
handlers return event objects (sends, offers, deliveries, anomalies)
instead of touching a network, which keeps them testable in isolation and
lets the simulator own time and transport.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from . import audit
from .channels import (
    DEFAULT_WEIGHTS,
    EVENT_MATCHED,
    EVENT_PHEROMONE,
    BroadcastPolicy,
    Channel,
    NeighborRecord,
    ScoreWeights,
    can_forward,
    record_relay_event,
    select_broadcast_set,
)
from .kernels import (
    ACTION_CONJUGATE,
    ACTION_DUPLICATE_LOWER,
    ACTION_NEW,
    Mempool,
)
from .messages import (
    COUNTER_MAX,
    Direction,
    SeedKind,
    SeedMessage,
    promote_to_confirmed,
    promote_to_matched,
)


@dataclass
class NodeConfig:
    fee: int = 0
    ttl_us: int = 30_000_000
    counter_start_max: int = 0  # 0 disables start concealment
    counter_step_max: int = 1  # 1 means plain increments
    volume_gating: bool = True
    policy: BroadcastPolicy = field(default_factory=BroadcastPolicy.flood_all)
    weights: ScoreWeights = DEFAULT_WEIGHTS
    offer_wait_factor: float = 2.0  # wait (factor-1) * first-offer latency for more offers
    fee_per_counter_cap: int | None = None  # payer-side offer filter, off by default


@dataclass
class MatchRecord:
    """Routing state one node keeps for one matched request."""

    matching_id: int
    r: bytes
    toward_payer: int | None  # next hop for payer-bound traffic, None at the payer
    toward_payee: int | None  # next hop for payee-bound traffic, None at the payee
    total_fee: int
    span: int  # claimed number of relays between the endpoints
    role: str  # payer | payee | matcher | relay_payer_side | relay_payee_side
    created_at: int
    confirmed_forwarded: bool = False


@dataclass(frozen=True)
class Offer:
    """One candidate path as seen by the payer."""

    matching_id: int
    fee: int
    span: int
    via: int | None  # neighbor that delivered the matched seed, None if self-matched
    received_at: int
    order: int


# --- events returned by the handlers -------------------------------------


@dataclass(frozen=True)
class Send:
    dst: int
    msg: SeedMessage


@dataclass(frozen=True)
class AckForward:
    dst: int
    matching_id: int


@dataclass(frozen=True)
class ReplayForward:
    dst: int
    matching_id: int
    trail: tuple


@dataclass(frozen=True)
class OfferAdded:
    r: bytes
    matching_id: int
    fee: int
    first: bool


@dataclass(frozen=True)
class ConfirmSent:
    r: bytes
    matching_id: int
    fee: int
    span: int


@dataclass(frozen=True)
class DeliveredToPayee:
    matching_id: int
    fee: int
    span: int


@dataclass(frozen=True)
class PaymentComplete:
    matching_id: int


@dataclass(frozen=True)
class ReplayDone:
    matching_id: int
    leftover: int  # tokens still in the trail when it reached the payee


@dataclass(frozen=True)
class Anomaly:
    kind: str
    neighbor: int | None


@dataclass(frozen=True)
class Blocked:
    reason: str


class Behavior:
    """Protocol-following node behavior; adversaries override pieces."""

    name = "honest"

    def relay_counter(self, node: "Node", received: int, honest_next: int) -> int:
        return honest_next

    def self_increment(self, node: "Node") -> int:
        # an interior matcher counts itself as one relay of the locked path
        return 1

    def span_claim(self, node: "Node", honest_span: int) -> int:
        return honest_span

    def matched_fee_out(self, node: "Node", fee: int) -> int:
        return fee

    def drops(self, node: "Node", kind: str) -> bool:
        return False

    def audit_append(self, node: "Node", matching_id: int, trail: tuple) -> tuple:
        token = audit.fresh_token(node.rng)
        node.audit_tokens[matching_id] = token
        return audit.append_token(trail, token)

    def audit_replay(self, node: "Node", matching_id: int, trail: tuple) -> tuple:
        token = node.audit_tokens.pop(matching_id, None)
        if token is None:
            # never appended (locked after the audit pass): nothing to consume
            return trail
        return audit.replay_step(trail, token)


HONEST = Behavior()


class Node:
    """One participant: channels, seed memory, match state, reputation."""

    def __init__(self, node_id: int, config: NodeConfig, rng, behavior: Behavior = HONEST):
        self.node_id = node_id
        self.config = config
        self.rng = rng
        self.behavior = behavior
        self.neighbors: dict[int, NeighborRecord] = {}
        self.mempool = Mempool()
        self.matches: dict[int, MatchRecord] = {}
        self.offers: dict[bytes, list[Offer]] = {}
        self.audit_tokens: dict[int, int] = {}
        self._offer_order = 0

    def attach(self, neighbor_id: int, channel: Channel) -> None:
        if neighbor_id in self.neighbors:
            raise ValueError(f"neighbor {neighbor_id} already attached")
        self.neighbors[neighbor_id] = NeighborRecord(neighbor_id, channel)

    # --- rebroadcast plumbing ---------------------------------------------

    def _volume_ok(self, rec: NeighborRecord, direction: Direction, amount: int) -> bool:
        # payer-side seeds travel with the payment flow, payee-side against it
        if direction is Direction.A:
            return can_forward(rec.channel, self.node_id, amount)
        return can_forward(rec.channel, rec.neighbor, amount)

    def _targets(self, exclude: set[int], direction: Direction, amount: int) -> list[int]:
        records = self.neighbors.values()
        if self.config.volume_gating:
            records = [r for r in records if self._volume_ok(r, direction, amount)]
        return select_broadcast_set(
            records, exclude, self.config.policy, self.rng, self.config.weights
        )

    def _next_counter(self, received: int) -> int:
        step = self.config.counter_step_max
        inc = 1 if step <= 1 else self.rng.randint(1, step)
        return min(received + inc, COUNTER_MAX)

    # --- handlers -----------------------------------------------------------

    def originate(self, seed: SeedMessage, now: int) -> list:
        """Start flooding this endpoint's own pheromone seed."""
        if seed.kind is not SeedKind.PHEROMONE:
            raise ValueError("can only originate pheromone seeds")
        start = self.config.counter_start_max
        initial = self.rng.randint(0, start) if start > 0 else 0
        msg = replace(seed, counter=initial, current_fee=0)
        self.mempool.add_origin(
            msg.r, msg.direction.value, initial, msg.amount, msg.max_fee, now
        )
        if msg.direction is Direction.A:
            self.offers.setdefault(msg.r, [])
        events = []
        for dst in self._targets(set(), msg.direction, msg.amount):
            self.mempool.record_sent(msg.r, msg.direction.value, dst, 0)
            events.append(Send(dst, msg))
        return events

    def handle_pheromone(self, msg: SeedMessage, sender: int, now: int) -> list:
        record_relay_event(self.neighbors[sender].stats, EVENT_PHEROMONE)
        action = self.mempool.observe(
            msg.r,
            msg.direction.value,
            sender,
            msg.counter,
            msg.current_fee,
            msg.amount,
            msg.max_fee,
            now,
        )
        if action == ACTION_CONJUGATE:
            return self._try_match(msg, now)
        if action not in (ACTION_NEW, ACTION_DUPLICATE_LOWER):
            return [Blocked("duplicate")]
        relay_fee = msg.current_fee + self.config.fee
        if relay_fee > msg.max_fee:
            # request cannot afford this node: remember it, spread it no further
            return [Blocked("fee_ceiling")]
        counter = self.behavior.relay_counter(self, msg.counter, self._next_counter(msg.counter))
        out = replace(msg, counter=counter, current_fee=relay_fee)
        events = []
        for dst in self._targets({sender}, msg.direction, msg.amount):
            self.mempool.record_sent(msg.r, msg.direction.value, dst, relay_fee)
            events.append(Send(dst, out))
        return events

    def _try_match(self, incoming: SeedMessage, now: int) -> list:
        """Both directions of a request are here: stitch them together."""
        r = incoming.r
        a_info = self.mempool.entry_info(r, Direction.A.value)
        b_info = self.mempool.entry_info(r, Direction.B.value)
        a_origin, a_min = a_info[0], a_info[1]
        b_origin, b_min = b_info[0], b_info[1]
        i_am_endpoint = a_origin or b_origin

        fee_a = 0 if a_origin else self.mempool.best_transmitter(r, Direction.A.value)[2]
        fee_b = 0 if b_origin else self.mempool.best_transmitter(r, Direction.B.value)[2]
        own_fee = 0 if i_am_endpoint else self.config.fee
        total_fee = fee_a + fee_b + own_fee
        if total_fee > incoming.max_fee:
            return [Blocked("fee_infeasible")]

        self_count = 0 if i_am_endpoint else self.behavior.self_increment(self)
        honest_span = a_min + b_min + self_count
        span = min(self.behavior.span_claim(self, honest_span), COUNTER_MAX)
        matching_id = self.rng.getrandbits(64)
        toward_payer = (
            None if a_origin else self.mempool.best_transmitter(r, Direction.A.value)[0]
        )
        toward_payee = (
            None if b_origin else self.mempool.best_transmitter(r, Direction.B.value)[0]
        )
        role = "payer" if a_origin else ("payee" if b_origin else "matcher")
        self.matches[matching_id] = MatchRecord(
            matching_id, r, toward_payer, toward_payee, total_fee, span, role, now
        )
        if a_origin:
            # the payer itself closed the loop: offer directly, skip the trail
            if r not in self.offers:  # already confirmed and cleaned up
                del self.matches[matching_id]
                return [Blocked("stale_matched")]
            return [self._add_offer(r, matching_id, total_fee, span, None, now)]
        base = SeedMessage(
            SeedKind.PHEROMONE,
            Direction.A,
            r,
            span,
            incoming.amount,
            incoming.max_fee,
            0,
        )
        matched = promote_to_matched(base, matching_id, total_fee)
        return [Send(toward_payer, matched)]

    def _add_offer(
        self, r: bytes, matching_id: int, fee: int, span: int, via: int | None, now: int
    ):
        first = not self.offers[r]
        self._offer_order += 1
        self.offers[r].append(Offer(matching_id, fee, span, via, now, self._offer_order))
        return OfferAdded(r, matching_id, fee, first)

    def handle_matched(self, msg: SeedMessage, sender: int, now: int) -> list:
        record_relay_event(self.neighbors[sender].stats, EVENT_MATCHED)
        rec = self.matches.get(msg.matching_id)
        if rec is not None:
            if msg.current_fee != rec.total_fee:
                return [Anomaly("fee_changed", sender)]
            return [Blocked("duplicate")]
        info = self.mempool.entry_info(msg.r, msg.direction.value)
        if info is None:
            return [Blocked("stale_matched")]
        if info[0]:  # payer: this matched seed is a path offer
            if msg.r not in self.offers:
                return [Blocked("stale_matched")]
            if msg.current_fee > msg.max_fee:
                return [Anomaly("fee_exceeds_max", sender)]
            cap = self.config.fee_per_counter_cap
            if cap is not None and msg.current_fee > cap * max(1, msg.counter):
                return [Blocked("offer_filtered")]
            return [self._add_offer(msg.r, msg.matching_id, msg.current_fee, msg.counter, sender, now)]
        best = self.mempool.best_transmitter(msg.r, msg.direction.value)
        self.matches[msg.matching_id] = MatchRecord(
            msg.matching_id,
            msg.r,
            best[0],
            sender,
            msg.current_fee,
            msg.counter,
            "relay_payer_side",
            now,
        )
        fee_out = self.behavior.matched_fee_out(self, msg.current_fee)
        out = msg if fee_out == msg.current_fee else replace(msg, current_fee=fee_out)
        return [Send(best[0], out)]

    def select_and_confirm(self, r: bytes, now: int) -> list:
        """Pick the cheapest offer (earliest on ties) and lock it in."""
        offers = self.offers.pop(r, None)
        if not offers:
            return [Blocked("no_offers")]
        best = min(offers, key=lambda o: (o.fee, o.received_at, o.order))
        info = self.mempool.entry_info(r, Direction.A.value)
        matched = SeedMessage(
            SeedKind.MATCHED,
            Direction.A,
            r,
            best.span,
            info[2],
            info[3],
            best.fee,
            best.matching_id,
        )
        confirmed = promote_to_confirmed(matched)
        if best.via is None:
            rec = self.matches[best.matching_id]
        else:
            rec = MatchRecord(
                best.matching_id, r, None, best.via, best.fee, best.span, "payer", now
            )
            self.matches[best.matching_id] = rec
        rec.confirmed_forwarded = True
        return [
            ConfirmSent(r, best.matching_id, best.fee, best.span),
            Send(rec.toward_payee, confirmed),
        ]

    def handle_confirmed(self, msg: SeedMessage, sender: int, now: int) -> list:
        rec = self.matches.get(msg.matching_id)
        if rec is None:
            # no matched-phase state: lock the payee side of the path now
            b_dir = msg.direction.conjugate()
            info = self.mempool.entry_info(msg.r, b_dir.value)
            if info is None:
                return [Blocked("route_lock_failure")]
            if info[0]:  # payee reached
                self.matches[msg.matching_id] = MatchRecord(
                    msg.matching_id,
                    msg.r,
                    sender,
                    None,
                    msg.current_fee,
                    msg.counter,
                    "payee",
                    now,
                    confirmed_forwarded=True,
                )
                return [DeliveredToPayee(msg.matching_id, msg.current_fee, msg.counter)]
            best = self.mempool.best_transmitter(msg.r, b_dir.value)
            self.matches[msg.matching_id] = MatchRecord(
                msg.matching_id,
                msg.r,
                sender,
                best[0],
                msg.current_fee,
                msg.counter,
                "relay_payee_side",
                now,
                confirmed_forwarded=True,
            )
            return [Send(best[0], msg)]
        if msg.current_fee != rec.total_fee:
            # someone rewrote the fee between the match and here
            return [Anomaly("fee_changed", sender)]
        if rec.confirmed_forwarded:
            return [Blocked("duplicate")]
        rec.confirmed_forwarded = True
        if rec.toward_payer is None:
            rec.toward_payer = sender
        if rec.toward_payee is None:
            return [DeliveredToPayee(msg.matching_id, msg.current_fee, msg.counter)]
        return [Send(rec.toward_payee, msg)]

    def handle_ack(self, matching_id: int, sender: int | None, now: int) -> list:
        """Path acknowledgment sweeping payee to payer; erase as it passes."""
        rec = self.matches.pop(matching_id, None)
        self.audit_tokens.pop(matching_id, None)
        if rec is None:
            return [Blocked("stale_ack")]
        if rec.toward_payer is None:
            return [PaymentComplete(matching_id)]
        return [AckForward(rec.toward_payer, matching_id)]

    def handle_replay(self, matching_id: int, trail: tuple, sender: int | None, now: int) -> list:
        """Payer-initiated trail replay along the locked path."""
        rec = self.matches.get(matching_id)
        if rec is None:
            return [Blocked("stale_replay")]
        if rec.toward_payee is None:
            return [ReplayDone(matching_id, len(trail))]
        remaining = self.behavior.audit_replay(self, matching_id, trail)
        return [ReplayForward(rec.toward_payee, matching_id, remaining)]

    def start_replay(self, matching_id: int, trail: tuple) -> list:
        """Payer kicks off the replay of the trail the payee handed back."""
        rec = self.matches.get(matching_id)
        if rec is None or rec.toward_payee is None:
            return [Blocked("stale_replay")]
        return [ReplayForward(rec.toward_payee, matching_id, trail)]

    def sweep(self, now: int) -> tuple[int, int]:
        """Drop request state older than the ttl; return eviction counts."""
        cutoff = now - self.config.ttl_us
        evicted_seeds = self.mempool.sweep(cutoff)
        stale = [mid for mid, rec in self.matches.items() if rec.created_at < cutoff]
        for mid in stale:
            del self.matches[mid]
            self.audit_tokens.pop(mid, None)
        for r in [r for r in self.offers if not self.mempool.contains(r, Direction.A.value)]:
            del self.offers[r]
        return evicted_seeds, len(stale)

    def oldest_entry_age(self, now: int) -> int | None:
        oldest = self.mempool.oldest_first_seen()
        return None if oldest is None else now - oldest
