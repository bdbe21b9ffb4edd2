"""Deterministic discrete-event simulation of the discovery protocol.

Virtual time is integer microseconds. The event heap is keyed by
(time, sequence), every random draw comes from a seeded substream, and
collections are iterated in sorted order, so a (scenario, seed) pair
always produces byte-identical metrics and event logs.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import random

from ..audit import CheatDetected
from ..channels import (
    EVENT_PAYMENT_FAIL,
    EVENT_PAYMENT_OK,
    Channel,
    ChannelBook,
    ScoreWeights,
    SettleError,
    record_relay_event,
    settle_path,
)
from ..messages import SeedKind, SeedMessage, encode, make_pheromone_pair
from ..node import (
    AckForward,
    Anomaly,
    Blocked,
    ConfirmSent,
    DeliveredToPayee,
    Node,
    NodeConfig,
    OfferAdded,
    PaymentComplete,
    ReplayDone,
    ReplayForward,
    Send,
)
from .adversary import make_behavior
from .metrics import PaymentResult, RunMetrics
from .oracle import shortest_path_hops
from .scenario import Scenario, draw_amount
from ..kernels import IMPLEMENTATION


class InvariantViolation(Exception):
    """Internal state broke a rule the simulation relies on."""


def substream(seed: int, label: str) -> random.Random:
    """Independent RNG stream derived from the scenario seed and a label."""
    digest = hashlib.sha256(f"{seed}|{label}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


_KIND_NAMES = {
    SeedKind.PHEROMONE: "pheromone",
    SeedKind.MATCHED: "matched",
    SeedKind.CONFIRMED: "confirmed",
}


class _PayState:
    __slots__ = (
        "r",
        "r_payer",
        "r_payee",
        "terminal",
        "confirm_scheduled",
        "chosen_id",
        "path",
        "span",
        "anomaly",
        "offer_fees",
    )

    def __init__(self, r_payer: bytes, r_payee: bytes, r: bytes):
        self.r_payer = r_payer
        self.r_payee = r_payee
        self.r = r
        self.terminal = False
        self.confirm_scheduled = False
        self.chosen_id: int | None = None
        self.path: list[int] | None = None
        self.span: int | None = None
        self.anomaly = False
        self.offer_fees: list[int] = []


class Simulation:
    def __init__(self, scenario: Scenario, event_log=None):
        self.scenario = scenario
        self.event_log = event_log
        self.horizon = scenario.horizon_us
        self.heap: list = []
        self._seq = 0
        self.now = 0

        self._lat_rng = substream(scenario.seed, "latency")
        self._build_network()
        self._build_payments()

        self.metrics = RunMetrics(
            seed=scenario.seed,
            horizon_us=scenario.horizon_us,
            nodes=scenario.topology.nodes,
            edges=len(scenario.topology.edges),
            kernel=IMPLEMENTATION,
        )
        self.metrics.payments = self.results
        self.r_to_pay: dict[bytes, int] = {st.r: i for i, st in enumerate(self.states)}
        self.id_to_pay: dict[int, int] = {}
        self.frame_of: dict[int, str] = {}

    # --- construction -------------------------------------------------------

    def _build_network(self) -> None:
        sc = self.scenario
        fee_rng = substream(sc.seed, "fees")
        cap_rng = substream(sc.seed, "capacity")

        defaults = dict(sc.node_defaults)
        self.oracle_gated = defaults.get("volume_gating", True)
        self.nodes: dict[int, Node] = {}
        self.node_fee: dict[int, int] = {}
        for node_id in range(sc.topology.nodes):
            params = dict(defaults)
            params.update(sc.node_overrides.get(node_id, {}))
            fee = draw_amount(params.get("fee", 0), fee_rng)
            weights_map = params.get("score_weights")
            weights = ScoreWeights(**weights_map) if weights_map else ScoreWeights()
            config = NodeConfig(
                fee=fee,
                ttl_us=params.get("ttl_us", 30_000_000),
                counter_start_max=params.get("counter_start_max", 0),
                counter_step_max=params.get("counter_step_max", 1),
                volume_gating=params.get("volume_gating", True),
                policy=params.get("policy", NodeConfig().policy),
                weights=weights,
                offer_wait_factor=params.get("offer_wait_factor", 2.0),
                fee_per_counter_cap=params.get("fee_per_counter_cap"),
            )
            behavior_spec = sc.adversaries.get(node_id)
            behavior = make_behavior(behavior_spec) if behavior_spec else None
            rng = substream(sc.seed, f"node|{node_id}")
            node = Node(node_id, config, rng) if behavior is None else Node(
                node_id, config, rng, behavior
            )
            self.nodes[node_id] = node
            self.node_fee[node_id] = fee

        self.book = ChannelBook()
        cap = sc.capacity
        for u, v in sc.topology.edges:
            cap_ab = cap.lo if cap.kind == "constant" else cap_rng.randint(cap.lo, cap.hi)
            if cap.unidirectional:
                cap_ba = 0
            else:
                cap_ba = cap.lo if cap.kind == "constant" else cap_rng.randint(cap.lo, cap.hi)
            channel = Channel(u, v, cap_ab, cap_ba, cap.unidirectional)
            self.book.add(channel)
            self.nodes[u].attach(v, channel)
            self.nodes[v].attach(u, channel)

    def _build_payments(self) -> None:
        sc = self.scenario
        rng = substream(sc.seed, "workload")
        n = sc.topology.nodes
        rows: list[tuple[int, int, int, int, int]] = []
        wl = sc.workload
        if wl.kind == "list":
            for t_us, payer, payee, amount, max_fee in wl.payments:
                rows.append((t_us, payer, payee, amount, max_fee))
        else:
            t = wl.start_us
            for _ in range(wl.count):
                if wl.kind == "poisson":
                    t += int(round(rng.expovariate(wl.rate_per_s) * 1_000_000))
                else:
                    t = t if not rows else t + wl.interval_us
                payer = rng.randrange(n)
                payee = rng.randrange(n - 1)
                if payee >= payer:
                    payee += 1
                rows.append(
                    (t, payer, payee, draw_amount(wl.amount, rng), draw_amount(wl.max_fee, rng))
                )

        self.results: list[PaymentResult] = []
        self.states: list[_PayState] = []
        for i, (t_us, payer, payee, amount, max_fee) in enumerate(rows):
            r_payer = rng.randbytes(16)
            r_payee = rng.randbytes(16)
            r = hashlib.sha256(r_payer + r_payee).digest()
            measured = True
            if sc.measure_after_us is not None:
                measured = t_us >= sc.measure_after_us
            self.results.append(
                PaymentResult(
                    index=i,
                    t0_us=t_us,
                    payer=payer,
                    payee=payee,
                    amount=amount,
                    max_fee=max_fee,
                    measured=measured,
                )
            )
            self.states.append(_PayState(r_payer, r_payee, r))

    # --- plumbing -----------------------------------------------------------

    def _push(self, t: int, payload: tuple) -> None:
        self._seq += 1
        heapq.heappush(self.heap, (t, self._seq, payload))

    def _latency(self) -> int:
        lat = self.scenario.latency
        if lat.lo_us == lat.hi_us:
            return lat.lo_us
        return self._lat_rng.randint(lat.lo_us, lat.hi_us)

    def _log(self, t: int, src: int, dst: int, kind: str, frame_hex: str) -> None:
        if self.event_log is None:
            return
        row = {"t": t, "src": src, "dst": dst, "kind": kind, "frame_hex": frame_hex}
        self.event_log.write(json.dumps(row, sort_keys=True, separators=(",", ":")) + "\n")

    def _count_message(self, index: int | None, kind: str) -> None:
        if index is not None:
            self.results[index].messages[kind] += 1

    def _fail(self, index: int, reason: str) -> None:
        state = self.states[index]
        if state.terminal:
            return
        state.terminal = True
        self.results[index].failure = reason

    # --- run loop -------------------------------------------------------------

    def run(self) -> RunMetrics:
        sc = self.scenario
        for i, p in enumerate(self.results):
            self._push(p.t0_us, ("originate", i))
        t = sc.sweep_interval_us
        while t <= self.horizon:
            self._push(t, ("sweep",))
            t += sc.sweep_interval_us
        if sc.policy_after is not None and sc.policy_after[0] <= self.horizon:
            self._push(sc.policy_after[0], ("policy_switch",))

        while self.heap:
            t, _, ev = heapq.heappop(self.heap)
            if t > self.horizon:
                break
            self.now = t
            handler = getattr(self, f"_on_{ev[0]}")
            handler(t, *ev[1:])

        for i, state in enumerate(self.states):
            if not state.terminal:
                self._fail(i, "anomaly" if state.anomaly else "timeout")
        return self.metrics

    # --- event handlers -------------------------------------------------------

    def _on_originate(self, t: int, index: int) -> None:
        p = self.results[index]
        state = self.states[index]
        oracle = shortest_path_hops(
            self.book, p.payer, p.payee, p.amount if self.oracle_gated else None
        )
        p.oracle_hops = None if oracle is None else oracle[0]
        seed_a, seed_b = make_pheromone_pair(state.r_payer, state.r_payee, p.amount, p.max_fee)
        for node_id, seed in ((p.payer, seed_a), (p.payee, seed_b)):
            events = self.nodes[node_id].originate(seed, t)
            self._dispatch(t, node_id, events, index, (), False)
            self._track_mempool(node_id)

    def _on_deliver(self, t: int, src: int, dst: int, msg: SeedMessage, trail: tuple) -> None:
        kind = _KIND_NAMES[msg.kind]
        self._log(t, src, dst, kind, encode(msg).hex())
        node = self.nodes[dst]
        if node.behavior.drops(node, kind):
            self.metrics.drops_by_adversary += 1
            return
        index = self.r_to_pay.get(msg.r)
        if msg.kind is SeedKind.PHEROMONE:
            events = node.handle_pheromone(msg, src, t)
        elif msg.kind is SeedKind.MATCHED:
            events = node.handle_matched(msg, src, t)
        else:
            events = node.handle_confirmed(msg, src, t)
        self._dispatch(t, dst, events, index, trail, msg.kind is SeedKind.CONFIRMED)
        self._track_mempool(dst)

    def _on_confirm(self, t: int, payer: int, r: bytes) -> None:
        index = self.r_to_pay.get(r)
        events = self.nodes[payer].select_and_confirm(r, t)
        self._dispatch(t, payer, events, index, (), False)

    def _on_ack(self, t: int, src: int, dst: int, matching_id: int) -> None:
        self._log(t, src, dst, "ack", self.frame_of.get(matching_id, ""))
        node = self.nodes[dst]
        if node.behavior.drops(node, "ack"):
            self.metrics.drops_by_adversary += 1
            return
        index = self.id_to_pay.get(matching_id)
        events = node.handle_ack(matching_id, src, t)
        self._dispatch(t, dst, events, index, (), False)

    def _on_replay(self, t: int, src: int, dst: int, matching_id: int, trail: tuple) -> None:
        self._log(t, src, dst, "replay", self.frame_of.get(matching_id, ""))
        node = self.nodes[dst]
        if node.behavior.drops(node, "replay"):
            self.metrics.drops_by_adversary += 1
            return
        index = self.id_to_pay.get(matching_id)
        try:
            events = node.handle_replay(matching_id, trail, src, t)
        except CheatDetected:
            self.metrics.cheats_detected += 1
            if index is not None:
                self._fail(index, "audit_replay")
            return
        self._dispatch(t, dst, events, index, (), False)

    def _on_sweep(self, t: int) -> None:
        self.metrics.sweeps += 1
        for node_id in sorted(self.nodes):
            node = self.nodes[node_id]
            evicted_seeds, evicted_matches = node.sweep(t)
            self.metrics.mempool_evictions += evicted_seeds
            self.metrics.match_evictions += evicted_matches
            age = node.oldest_entry_age(t)
            if age is not None and age > self.metrics.max_entry_age_after_sweep_us:
                self.metrics.max_entry_age_after_sweep_us = age

    def _on_policy_switch(self, t: int) -> None:
        policy = self.scenario.policy_after[1]
        for node_id in sorted(self.nodes):
            self.nodes[node_id].config.policy = policy

    # --- node event fan-out -----------------------------------------------------

    def _dispatch(
        self,
        t: int,
        node_id: int,
        events: list,
        index: int | None,
        trail: tuple,
        confirmed_relay: bool,
    ) -> None:
        node = self.nodes[node_id]
        for ev in events:
            if isinstance(ev, Send):
                kind = _KIND_NAMES[ev.msg.kind]
                self._count_message(self.r_to_pay.get(ev.msg.r), kind)
                out_trail = trail
                if ev.msg.kind is SeedKind.CONFIRMED:
                    if ev.msg.matching_id not in self.frame_of:
                        self.frame_of[ev.msg.matching_id] = encode(ev.msg).hex()
                    if self.scenario.audit and confirmed_relay:
                        out_trail = node.behavior.audit_append(
                            node, ev.msg.matching_id, trail
                        )
                self._push(t + self._latency(), ("deliver", node_id, ev.dst, ev.msg, out_trail))
            elif isinstance(ev, OfferAdded):
                self._handle_offer(t, node_id, ev)
            elif isinstance(ev, ConfirmSent):
                pay = self.r_to_pay.get(ev.r)
                if pay is not None:
                    self.id_to_pay[ev.matching_id] = pay
                    self.states[pay].chosen_id = ev.matching_id
                    self.states[pay].span = ev.span
                    self.results[pay].total_fee = ev.fee
            elif isinstance(ev, DeliveredToPayee):
                self._handle_delivered(t, node_id, ev, trail)
            elif isinstance(ev, PaymentComplete):
                pay = self.id_to_pay.get(ev.matching_id)
                if pay is not None:
                    self._settle(t, pay)
            elif isinstance(ev, AckForward):
                self._count_message(self.id_to_pay.get(ev.matching_id), "ack")
                self._push(t + self._latency(), ("ack", node_id, ev.dst, ev.matching_id))
            elif isinstance(ev, ReplayForward):
                self._count_message(self.id_to_pay.get(ev.matching_id), "replay")
                self._push(
                    t + self._latency(),
                    ("replay", node_id, ev.dst, ev.matching_id, ev.trail),
                )
            elif isinstance(ev, ReplayDone):
                self._handle_replay_done(t, node_id, ev)
            elif isinstance(ev, Anomaly):
                self.metrics.anomalies_detected += 1
                if index is not None:
                    self.states[index].anomaly = True
                if ev.neighbor is not None:
                    record_relay_event(
                        node.neighbors[ev.neighbor].stats, EVENT_PAYMENT_FAIL
                    )
            elif isinstance(ev, Blocked):
                self.metrics.blocked[ev.reason] = self.metrics.blocked.get(ev.reason, 0) + 1
                if ev.reason == "route_lock_failure":
                    self.metrics.route_lock_failures += 1
            else:
                raise InvariantViolation(f"unknown node event {ev!r}")

    def _handle_offer(self, t: int, node_id: int, ev: OfferAdded) -> None:
        index = self.r_to_pay.get(ev.r)
        if index is None:
            return
        p = self.results[index]
        state = self.states[index]
        p.offers_received += 1
        state.offer_fees.append(ev.fee)
        if ev.first and p.discovery_latency_us is None:
            p.discovery_latency_us = t - p.t0_us
        if not state.confirm_scheduled:
            state.confirm_scheduled = True
            factor = self.nodes[node_id].config.offer_wait_factor
            wait = max(0, int(round((factor - 1.0) * (t - p.t0_us))))
            self._push(t + wait, ("confirm", node_id, ev.r))

    def _walk_path(self, index: int, matching_id: int) -> list[int]:
        p = self.results[index]
        path = [p.payer]
        seen = {p.payer}
        while True:
            rec = self.nodes[path[-1]].matches.get(matching_id)
            if rec is None:
                raise InvariantViolation(f"locked path broken at node {path[-1]}")
            if rec.toward_payee is None:
                break
            nxt = rec.toward_payee
            if nxt in seen or len(path) > self.scenario.topology.nodes:
                raise InvariantViolation("locked path loops")
            seen.add(nxt)
            path.append(nxt)
        if path[-1] != p.payee:
            raise InvariantViolation(
                f"locked path ends at {path[-1]}, expected payee {p.payee}"
            )
        return path

    def _handle_delivered(self, t: int, payee_id: int, ev: DeliveredToPayee, trail: tuple) -> None:
        index = self.id_to_pay.get(ev.matching_id)
        if index is None:
            return
        p = self.results[index]
        state = self.states[index]
        if state.terminal or state.path is not None:
            return
        state.path = self._walk_path(index, ev.matching_id)
        p.path_hops = len(state.path) - 1
        # capacity check is taken when the path locks, before settlement can
        # shift balances around
        p.volume_ok_at_lock = all(
            self.book.get(state.path[i], state.path[i + 1]).capacity_from(state.path[i])
            >= p.amount
            for i in range(len(state.path) - 1)
        )
        if self.scenario.audit:
            # count check at the payee, then the payer replays the trail
            if len(trail) != ev.span:
                self.metrics.cheats_detected += 1
                self._fail(index, "audit_count")
                return
            events = self.nodes[p.payer].start_replay(ev.matching_id, trail)
            self._dispatch(t, p.payer, events, index, (), False)
            return
        events = self.nodes[payee_id].handle_ack(ev.matching_id, None, t)
        self._dispatch(t, payee_id, events, index, (), False)

    def _handle_replay_done(self, t: int, payee_id: int, ev: ReplayDone) -> None:
        index = self.id_to_pay.get(ev.matching_id)
        if index is None:
            return
        if ev.leftover:
            self.metrics.cheats_detected += 1
            self._fail(index, "audit_leftover")
            return
        events = self.nodes[payee_id].handle_ack(ev.matching_id, None, t)
        self._dispatch(t, payee_id, events, index, (), False)

    def _settle(self, t: int, index: int) -> None:
        p = self.results[index]
        state = self.states[index]
        if state.terminal or state.path is None:
            return
        path = state.path
        hop_fees = [self.node_fee[v] for v in path[1:-1]]
        p.ground_fee_sum = sum(hop_fees)
        try:
            settle_path(self.book, path, p.amount, hop_fees)
        except SettleError:
            self._credit_path(path, ok=False, amount=p.amount)
            self._fail(index, "settle")
            return
        state.terminal = True
        p.success = True
        p.completed_at_us = t
        if p.oracle_hops:
            p.stretch = p.path_hops / p.oracle_hops
        self._credit_path(path, ok=True, amount=p.amount)

    def _credit_path(self, path: list[int], ok: bool, amount: int) -> None:
        event = EVENT_PAYMENT_OK if ok else EVENT_PAYMENT_FAIL
        for i, v in enumerate(path):
            node = self.nodes[v]
            for adj in (path[i - 1] if i > 0 else None, path[i + 1] if i < len(path) - 1 else None):
                if adj is not None:
                    record_relay_event(node.neighbors[adj].stats, event, amount)

    def _track_mempool(self, node_id: int) -> None:
        size = len(self.nodes[node_id].mempool)
        if size > self.metrics.peak_node_mempool:
            self.metrics.peak_node_mempool = size


def run_scenario(scenario: Scenario, event_log=None) -> RunMetrics:
    """Build and run one simulation; returns its metrics."""
    return Simulation(scenario, event_log=event_log).run()
