"""Payment channels, per-neighbor reputation and broadcast target selection.

Nodes only ever see their own channels and the traffic on them; everything
here is local state. Reputation is what lets a node narrow its rebroadcast
set from "every neighbor" down to the few that historically led anywhere.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

SHORT_WINDOW = 64  # events kept in the recent-history ring per neighbor

EVENT_PHEROMONE = "pheromone"
EVENT_MATCHED = "matched"
EVENT_PAYMENT_OK = "payment_ok"
EVENT_PAYMENT_FAIL = "payment_fail"


class SettleError(Exception):
    """Raised when a path cannot be settled; no balances were touched."""


@dataclass
class Channel:
    node_a: int
    node_b: int
    capacity_ab: int
    capacity_ba: int
    unidirectional: bool = False

    def __post_init__(self) -> None:
        if self.node_a == self.node_b:
            raise ValueError("channel endpoints must differ")
        if self.capacity_ab < 0 or self.capacity_ba < 0:
            raise ValueError("capacities must be nonnegative")
        if self.unidirectional and self.capacity_ba != 0:
            raise ValueError("unidirectional channels have no reverse capacity")

    def capacity_from(self, node: int) -> int:
        if node == self.node_a:
            return self.capacity_ab
        if node == self.node_b:
            return self.capacity_ba
        raise ValueError(f"node {node} is not an endpoint of this channel")

    def other(self, node: int) -> int:
        if node == self.node_a:
            return self.node_b
        if node == self.node_b:
            return self.node_a
        raise ValueError(f"node {node} is not an endpoint of this channel")

    def transfer(self, from_node: int, amount: int) -> None:
        """Move amount across the channel; caller has already validated."""
        if from_node == self.node_a:
            self.capacity_ab -= amount
            if not self.unidirectional:
                self.capacity_ba += amount
        elif from_node == self.node_b:
            self.capacity_ba -= amount
            if not self.unidirectional:
                self.capacity_ab += amount
        else:
            raise ValueError(f"node {from_node} is not an endpoint of this channel")
        if self.capacity_ab < 0 or self.capacity_ba < 0:
            raise SettleError("transfer drove a capacity negative")


def can_forward(channel: Channel, from_node: int, amount: int) -> bool:
    """True when the channel can carry amount out of from_node right now."""
    if amount <= 0:
        raise ValueError("amount must be positive")
    return channel.capacity_from(from_node) >= amount


class ChannelBook:
    """All channels of a network, indexed by endpoint pair."""

    def __init__(self) -> None:
        self._by_pair: dict[tuple[int, int], Channel] = {}
        self._adj: dict[int, list[int]] = {}

    def add(self, channel: Channel) -> None:
        key = self._key(channel.node_a, channel.node_b)
        if key in self._by_pair:
            raise ValueError(f"duplicate channel {key}")
        self._by_pair[key] = channel
        self._adj.setdefault(channel.node_a, []).append(channel.node_b)
        self._adj.setdefault(channel.node_b, []).append(channel.node_a)

    @staticmethod
    def _key(u: int, v: int) -> tuple[int, int]:
        return (u, v) if u < v else (v, u)

    def get(self, u: int, v: int) -> Channel | None:
        return self._by_pair.get(self._key(u, v))

    def neighbors(self, node: int) -> list[int]:
        return sorted(self._adj.get(node, []))

    def channels(self) -> list[Channel]:
        return [self._by_pair[k] for k in sorted(self._by_pair)]

    def total_capacity(self) -> int:
        return sum(c.capacity_ab + c.capacity_ba for c in self._by_pair.values())


def settle_path(
    book: ChannelBook,
    path: list[int],
    amount: int,
    hop_fees: list[int],
) -> list[int]:
    """Atomically move a payment along path, decreasing by each hop's fee.

    hop_fees holds the fee of each interior node, so the edge leaving hop i
    carries amount minus the fees already collected. Validates every edge
    before touching any balance; raises SettleError and leaves the book
    unchanged if the path cannot carry the payment.
    Returns the per-edge transfer amounts.
    """
    if len(path) < 2:
        raise SettleError("path needs at least two nodes")
    if len(hop_fees) != len(path) - 2:
        raise SettleError("need one fee per interior node")
    transfers = []
    carried = amount
    for i in range(len(path) - 1):
        if i > 0:
            carried -= hop_fees[i - 1]
        if carried <= 0:
            raise SettleError("fees consumed the whole payment")
        transfers.append(carried)

    edges = []
    for i, carried in enumerate(transfers):
        u, v = path[i], path[i + 1]
        channel = book.get(u, v)
        if channel is None:
            raise SettleError(f"no channel between {u} and {v}")
        edges.append((channel, u, carried))
    for channel, u, carried in edges:
        if not can_forward(channel, u, carried):
            raise SettleError(
                f"channel {channel.node_a}-{channel.node_b} cannot carry {carried}"
            )
    for channel, u, carried in edges:
        channel.transfer(u, carried)
    return transfers


@dataclass
class NeighborStats:
    """What a node remembers about one neighbor's usefulness."""

    pheromone_relayed: int = 0
    matched_relayed: int = 0
    payments_completed: int = 0
    payments_failed: int = 0
    volume_total: int = 0
    window: deque = field(default_factory=lambda: deque(maxlen=SHORT_WINDOW))

    @property
    def short_success_ratio(self) -> float:
        if not self.window:
            return 0.0
        return sum(self.window) / len(self.window)

    @property
    def failure_ratio(self) -> float:
        closed = self.payments_completed + self.payments_failed
        return self.payments_failed / closed if closed else 0.0


def record_relay_event(stats: NeighborStats, event: str, amount: int = 0) -> None:
    """Fold one observed event into a neighbor's stats.

    payment_fail is the only negative event; everything else counts as a
    sign of life in the short window.
    """
    if event == EVENT_PHEROMONE:
        stats.pheromone_relayed += 1
        stats.window.append(1)
    elif event == EVENT_MATCHED:
        stats.matched_relayed += 1
        stats.window.append(1)
    elif event == EVENT_PAYMENT_OK:
        stats.payments_completed += 1
        stats.volume_total += amount
        stats.window.append(1)
    elif event == EVENT_PAYMENT_FAIL:
        stats.payments_failed += 1
        stats.window.append(0)
    else:
        raise ValueError(f"unknown relay event {event!r}")


@dataclass(frozen=True)
class ScoreWeights:
    completed: float = 1.0
    volume: float = 0.25
    short: float = 1.0
    failure: float = 1.0


DEFAULT_WEIGHTS = ScoreWeights()


def neighbor_score(stats: NeighborStats, weights: ScoreWeights = DEFAULT_WEIGHTS) -> float:
    """Blend long-run usefulness with recent behavior into one score.

    Logs keep heavy payment counts and volumes from drowning the recency
    terms; a neighbor with no history scores exactly zero.
    """
    return (
        weights.completed * math.log1p(stats.payments_completed)
        + weights.volume * math.log1p(stats.volume_total)
        + weights.short * stats.short_success_ratio
        - weights.failure * stats.failure_ratio
    )


@dataclass
class NeighborRecord:
    """One node's view of one neighbor: the channel plus reputation."""

    neighbor: int
    channel: Channel
    stats: NeighborStats = field(default_factory=NeighborStats)


@dataclass(frozen=True)
class BroadcastPolicy:
    """How a node picks rebroadcast targets among its neighbors."""

    kind: str
    k: int | None = None
    alpha: float | None = None

    def __post_init__(self) -> None:
        if self.kind == "flood_all":
            if self.k is not None or self.alpha is not None:
                raise ValueError("flood_all takes no parameters")
        elif self.kind == "top_k":
            if self.k is None or self.k < 1:
                raise ValueError("top_k needs k >= 1")
            if self.alpha is not None:
                raise ValueError("top_k takes no alpha")
        elif self.kind == "pareto_weighted":
            if self.k is None or self.k < 1:
                raise ValueError("pareto_weighted needs k >= 1")
            if self.alpha is None or self.alpha < 0:
                raise ValueError("pareto_weighted needs alpha >= 0")
        else:
            raise ValueError(f"unknown policy kind {self.kind!r}")

    @classmethod
    def flood_all(cls) -> "BroadcastPolicy":
        return cls("flood_all")

    @classmethod
    def top_k(cls, k: int) -> "BroadcastPolicy":
        return cls("top_k", k=k)

    @classmethod
    def pareto_weighted(cls, alpha: float, k: int) -> "BroadcastPolicy":
        return cls("pareto_weighted", k=k, alpha=alpha)


def select_broadcast_set(
    records: Iterable[NeighborRecord],
    exclude: set[int],
    policy: BroadcastPolicy,
    rng,
    weights: ScoreWeights = DEFAULT_WEIGHTS,
) -> list[int]:
    """Pick rebroadcast targets; returns neighbor ids in ascending order.

    flood_all takes everyone, top_k the k best scores (ties broken by id),
    pareto_weighted draws k without replacement with probability
    proportional to rank^-alpha. Asking for k >= candidates returns all.
    """
    candidates = sorted(
        (rec for rec in records if rec.neighbor not in exclude),
        key=lambda rec: rec.neighbor,
    )
    if not candidates:
        return []
    if policy.kind == "flood_all" or (policy.k is not None and policy.k >= len(candidates)):
        return [rec.neighbor for rec in candidates]

    ranked = sorted(
        candidates,
        key=lambda rec: (-neighbor_score(rec.stats, weights), rec.neighbor),
    )
    if policy.kind == "top_k":
        chosen = ranked[: policy.k]
        return sorted(rec.neighbor for rec in chosen)

    # pareto_weighted: rank 1 is the best neighbor, weight = rank^-alpha
    pool = list(ranked)
    pool_weights = [(i + 1) ** -policy.alpha for i in range(len(pool))]
    picked = []
    for _ in range(policy.k):
        total = sum(pool_weights)
        mark = rng.random() * total
        acc = 0.0
        index = len(pool) - 1
        for i, w in enumerate(pool_weights):
            acc += w
            if mark < acc:
                index = i
                break
        picked.append(pool.pop(index).neighbor)
        pool_weights.pop(index)
    return sorted(picked)
