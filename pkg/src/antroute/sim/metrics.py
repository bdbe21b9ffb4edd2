"""Run results: per-payment rows plus aggregates, serialized stably.

JSON output is sorted-keys with fixed separators and CSV columns are
fixed, so identical runs produce identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

MESSAGE_KINDS = ("pheromone", "matched", "confirmed", "ack", "replay")


def _percentile(sorted_values: list, q: float) -> float:
    """Nearest-rank percentile on pre-sorted data."""
    if not sorted_values:
        return 0.0
    rank = min(len(sorted_values), max(1, math.ceil(q * len(sorted_values))))
    return float(sorted_values[rank - 1])


@dataclass
class PaymentResult:
    index: int
    t0_us: int
    payer: int
    payee: int
    amount: int
    max_fee: int
    measured: bool = True
    success: bool = False
    failure: str | None = None
    discovery_latency_us: int | None = None
    completed_at_us: int | None = None
    path_hops: int | None = None
    oracle_hops: int | None = None
    total_fee: int | None = None
    ground_fee_sum: int | None = None
    stretch: float | None = None
    volume_ok_at_lock: bool | None = None
    offers_received: int = 0
    messages: dict = field(default_factory=lambda: {k: 0 for k in MESSAGE_KINDS})

    def messages_total(self) -> int:
        return sum(self.messages.values())


@dataclass
class RunMetrics:
    seed: int
    horizon_us: int
    nodes: int
    edges: int
    payments: list[PaymentResult] = field(default_factory=list)
    anomalies_detected: int = 0
    cheats_detected: int = 0
    route_lock_failures: int = 0
    blocked: dict = field(default_factory=dict)
    drops_by_adversary: int = 0
    mempool_evictions: int = 0
    match_evictions: int = 0
    peak_node_mempool: int = 0
    max_entry_age_after_sweep_us: int = 0
    sweeps: int = 0
    kernel: str = ""

    def _aggregate(self, rows: list[PaymentResult]) -> dict:
        successes = [p for p in rows if p.success]
        latencies = sorted(
            p.discovery_latency_us for p in successes if p.discovery_latency_us is not None
        )
        stretches = [p.stretch for p in successes if p.stretch is not None]
        messages = {k: sum(p.messages[k] for p in rows) for k in MESSAGE_KINDS}
        messages["total"] = sum(messages.values())
        failures: dict[str, int] = {}
        for p in rows:
            if p.failure:
                failures[p.failure] = failures.get(p.failure, 0) + 1
        out = {
            "payments": len(rows),
            "successes": len(successes),
            "success_rate": (len(successes) / len(rows)) if rows else 0.0,
            "messages": messages,
            "messages_per_payment": (messages["total"] / len(rows)) if rows else 0.0,
            "failures": failures,
            "discovery_latency_us": {
                "mean": (sum(latencies) / len(latencies)) if latencies else 0.0,
                "p50": _percentile(latencies, 0.50),
                "p90": _percentile(latencies, 0.90),
                "max": float(latencies[-1]) if latencies else 0.0,
            },
            "stretch": {
                "mean": (sum(stretches) / len(stretches)) if stretches else 0.0,
                "max": max(stretches) if stretches else 0.0,
            },
        }
        return out

    def to_dict(self) -> dict:
        measured_rows = [p for p in self.payments if p.measured]
        # deliberately no kernel tag here: fast and reference runs of the
        # same scenario must serialize to identical bytes
        out = {
            "seed": self.seed,
            "horizon_us": self.horizon_us,
            "nodes": self.nodes,
            "edges": self.edges,
            "aggregate": self._aggregate(self.payments),
            "counters": {
                "anomalies_detected": self.anomalies_detected,
                "cheats_detected": self.cheats_detected,
                "route_lock_failures": self.route_lock_failures,
                "blocked": dict(sorted(self.blocked.items())),
                "drops_by_adversary": self.drops_by_adversary,
                "mempool_evictions": self.mempool_evictions,
                "match_evictions": self.match_evictions,
                "peak_node_mempool": self.peak_node_mempool,
                "max_entry_age_after_sweep_us": self.max_entry_age_after_sweep_us,
                "sweeps": self.sweeps,
            },
            "payments": [
                {
                    "index": p.index,
                    "t0_us": p.t0_us,
                    "payer": p.payer,
                    "payee": p.payee,
                    "amount": p.amount,
                    "max_fee": p.max_fee,
                    "measured": p.measured,
                    "success": p.success,
                    "failure": p.failure,
                    "discovery_latency_us": p.discovery_latency_us,
                    "completed_at_us": p.completed_at_us,
                    "path_hops": p.path_hops,
                    "oracle_hops": p.oracle_hops,
                    "total_fee": p.total_fee,
                    "ground_fee_sum": p.ground_fee_sum,
                    "stretch": p.stretch,
                    "volume_ok_at_lock": p.volume_ok_at_lock,
                    "offers_received": p.offers_received,
                    "messages": dict(p.messages),
                }
                for p in self.payments
            ],
        }
        if len(measured_rows) != len(self.payments):
            out["measured"] = self._aggregate(measured_rows)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"

    CSV_COLUMNS = (
        "index",
        "t0_us",
        "payer",
        "payee",
        "amount",
        "max_fee",
        "measured",
        "success",
        "failure",
        "discovery_latency_us",
        "completed_at_us",
        "path_hops",
        "oracle_hops",
        "total_fee",
        "ground_fee_sum",
        "stretch",
        "volume_ok_at_lock",
        "offers_received",
        "msgs_pheromone",
        "msgs_matched",
        "msgs_confirmed",
        "msgs_ack",
        "msgs_replay",
        "msgs_total",
    )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.CSV_COLUMNS)
        for p in self.payments:
            writer.writerow(
                [
                    p.index,
                    p.t0_us,
                    p.payer,
                    p.payee,
                    p.amount,
                    p.max_fee,
                    int(p.measured),
                    int(p.success),
                    p.failure or "",
                    "" if p.discovery_latency_us is None else p.discovery_latency_us,
                    "" if p.completed_at_us is None else p.completed_at_us,
                    "" if p.path_hops is None else p.path_hops,
                    "" if p.oracle_hops is None else p.oracle_hops,
                    "" if p.total_fee is None else p.total_fee,
                    "" if p.ground_fee_sum is None else p.ground_fee_sum,
                    "" if p.stretch is None else repr(p.stretch),
                    "" if p.volume_ok_at_lock is None else int(p.volume_ok_at_lock),
                    p.offers_received,
                    p.messages["pheromone"],
                    p.messages["matched"],
                    p.messages["confirmed"],
                    p.messages["ack"],
                    p.messages["replay"],
                    p.messages_total(),
                ]
            )
        return buf.getvalue()
