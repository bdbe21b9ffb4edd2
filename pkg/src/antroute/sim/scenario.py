"""Scenario files: what to simulate, validated strictly.

A scenario is a JSON object naming a topology, a workload, per-node
parameters and the knobs of one run. Validation is deliberately fussy:
any unknown key anywhere is an error, so a typo cannot silently change an
experiment. All times are seconds in the file and integer microseconds
once parsed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..channels import BroadcastPolicy
from .topology import GENERATORS, Topology, load_topology

ADVERSARY_KINDS = ("counter_cheat", "fee_inflate", "dropper", "transparent_cheat")


class ScenarioError(ValueError):
    """The scenario file is malformed; the message names the offender."""


def _require_keys(obj: dict, where: str, required: set, optional: set) -> None:
    if not isinstance(obj, dict):
        raise ScenarioError(f"{where} must be an object")
    unknown = set(obj) - required - optional
    if unknown:
        raise ScenarioError(f"unknown key(s) in {where}: {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise ScenarioError(f"missing key(s) in {where}: {sorted(missing)}")


def _as_int(value, where: str, lo: int | None = None, hi: int | None = None) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise ScenarioError(f"{where} must be an integer, got {value!r}")
    if lo is not None and value < lo:
        raise ScenarioError(f"{where} must be >= {lo}, got {value}")
    if hi is not None and value > hi:
        raise ScenarioError(f"{where} must be <= {hi}, got {value}")
    return value


def _as_number(value, where: str, lo: float | None = None) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{where} must be a number, got {value!r}")
    if lo is not None and value < lo:
        raise ScenarioError(f"{where} must be >= {lo}, got {value}")
    return float(value)


def _as_bool(value, where: str) -> bool:
    if not isinstance(value, bool):
        raise ScenarioError(f"{where} must be a boolean, got {value!r}")
    return value


def _seconds_to_us(value: float) -> int:
    return int(round(value * 1_000_000))


def _parse_amount(value, where: str) -> int | dict:
    """An amount-like field: either a constant or a uniform range."""
    if isinstance(value, dict):
        _require_keys(value, where, {"kind", "lo", "hi"}, set())
        if value["kind"] != "uniform":
            raise ScenarioError(f"{where}.kind must be 'uniform'")
        lo = _as_int(value["lo"], f"{where}.lo", lo=0)
        hi = _as_int(value["hi"], f"{where}.hi", lo=lo)
        return {"kind": "uniform", "lo": lo, "hi": hi}
    return _as_int(value, where, lo=0)


def draw_amount(spec: int | dict, rng) -> int:
    if isinstance(spec, dict):
        return rng.randint(spec["lo"], spec["hi"])
    return spec


def parse_policy(obj, where: str = "policy") -> BroadcastPolicy:
    _require_keys(obj, where, {"kind"}, {"k", "alpha"})
    kind = obj["kind"]
    try:
        if kind == "flood_all":
            if set(obj) - {"kind"}:
                raise ScenarioError(f"{where}: flood_all takes no parameters")
            return BroadcastPolicy.flood_all()
        if kind == "top_k":
            _require_keys(obj, where, {"kind", "k"}, set())
            return BroadcastPolicy.top_k(_as_int(obj["k"], f"{where}.k", lo=1))
        if kind == "pareto_weighted":
            _require_keys(obj, where, {"kind", "k", "alpha"}, set())
            return BroadcastPolicy.pareto_weighted(
                _as_number(obj["alpha"], f"{where}.alpha", lo=0.0),
                _as_int(obj["k"], f"{where}.k", lo=1),
            )
    except ValueError as exc:
        raise ScenarioError(f"{where}: {exc}") from None
    raise ScenarioError(f"{where}.kind must be one of flood_all/top_k/pareto_weighted")


@dataclass(frozen=True)
class LatencySpec:
    lo_us: int
    hi_us: int


@dataclass(frozen=True)
class CapacitySpec:
    kind: str
    lo: int
    hi: int
    unidirectional: bool


@dataclass(frozen=True)
class WorkloadSpec:
    kind: str
    payments: tuple = ()  # for kind=list: (t_us, payer, payee, amount, max_fee)
    count: int = 0
    start_us: int = 0
    rate_per_s: float = 0.0
    interval_us: int = 0
    amount: int | dict = 1
    max_fee: int | dict = 0


@dataclass
class Scenario:
    seed: int
    horizon_us: int
    topology: Topology
    workload: WorkloadSpec
    latency: LatencySpec
    capacity: CapacitySpec
    node_defaults: dict
    node_overrides: dict[int, dict]
    adversaries: dict[int, dict]
    audit: bool
    sweep_interval_us: int
    policy_after: tuple[int, BroadcastPolicy] | None
    measure_after_us: int | None
    name: str = ""
    overrides_applied: dict = field(default_factory=dict)


NODE_PARAM_KEYS = {
    "fee",
    "ttl_s",
    "counter_start_max",
    "counter_step_max",
    "volume_gating",
    "policy",
    "offer_wait_factor",
    "fee_per_counter_cap",
    "score_weights",
}


def _parse_node_params(obj: dict, where: str) -> dict:
    _require_keys(obj, where, set(), NODE_PARAM_KEYS)
    out: dict = {}
    if "fee" in obj:
        out["fee"] = _parse_amount(obj["fee"], f"{where}.fee")
    if "ttl_s" in obj:
        ttl = _as_number(obj["ttl_s"], f"{where}.ttl_s", lo=0.0)
        if ttl <= 0:
            raise ScenarioError(f"{where}.ttl_s must be positive")
        out["ttl_us"] = _seconds_to_us(ttl)
    if "counter_start_max" in obj:
        out["counter_start_max"] = _as_int(obj["counter_start_max"], f"{where}.counter_start_max", lo=0)
    if "counter_step_max" in obj:
        out["counter_step_max"] = _as_int(obj["counter_step_max"], f"{where}.counter_step_max", lo=1)
    if "volume_gating" in obj:
        out["volume_gating"] = _as_bool(obj["volume_gating"], f"{where}.volume_gating")
    if "policy" in obj:
        out["policy"] = parse_policy(obj["policy"], f"{where}.policy")
    if "offer_wait_factor" in obj:
        out["offer_wait_factor"] = _as_number(obj["offer_wait_factor"], f"{where}.offer_wait_factor", lo=1.0)
    if "fee_per_counter_cap" in obj:
        cap = obj["fee_per_counter_cap"]
        out["fee_per_counter_cap"] = None if cap is None else _as_int(cap, f"{where}.fee_per_counter_cap", lo=0)
    if "score_weights" in obj:
        weights = obj["score_weights"]
        _require_keys(weights, f"{where}.score_weights", set(), {"completed", "volume", "short", "failure"})
        out["score_weights"] = {
            key: _as_number(weights[key], f"{where}.score_weights.{key}") for key in weights
        }
    return out


def _parse_topology(obj: dict, scenario_seed: int) -> Topology:
    _require_keys(
        obj,
        "topology",
        {"kind"},
        {"n", "p", "m", "rows", "cols", "seed", "nodes", "edges", "path"},
    )
    kind = obj["kind"]
    try:
        if kind == "line":
            _require_keys(obj, "topology", {"kind", "n"}, set())
            return GENERATORS["line"](_as_int(obj["n"], "topology.n", lo=2))
        if kind == "ring":
            _require_keys(obj, "topology", {"kind", "n"}, set())
            return GENERATORS["ring"](_as_int(obj["n"], "topology.n", lo=3))
        if kind == "grid":
            _require_keys(obj, "topology", {"kind", "rows", "cols"}, set())
            return GENERATORS["grid"](
                _as_int(obj["rows"], "topology.rows", lo=1),
                _as_int(obj["cols"], "topology.cols", lo=1),
            )
        if kind == "erdos_renyi":
            _require_keys(obj, "topology", {"kind", "n", "p"}, {"seed"})
            return GENERATORS["erdos_renyi"](
                _as_int(obj["n"], "topology.n", lo=2),
                _as_number(obj["p"], "topology.p", lo=0.0),
                _as_int(obj.get("seed", scenario_seed), "topology.seed"),
            )
        if kind == "barabasi_albert":
            _require_keys(obj, "topology", {"kind", "n", "m"}, {"seed"})
            return GENERATORS["barabasi_albert"](
                _as_int(obj["n"], "topology.n", lo=2),
                _as_int(obj["m"], "topology.m", lo=1),
                _as_int(obj.get("seed", scenario_seed), "topology.seed"),
            )
        if kind == "explicit":
            _require_keys(obj, "topology", {"kind", "nodes", "edges"}, set())
            edges = obj["edges"]
            if not isinstance(edges, list):
                raise ScenarioError("topology.edges must be a list")
            return Topology(
                _as_int(obj["nodes"], "topology.nodes", lo=2),
                [tuple(e) for e in edges],
            )
        if kind == "file":
            _require_keys(obj, "topology", {"kind", "path"}, set())
            return load_topology(obj["path"])
    except ScenarioError:
        raise
    except (ValueError, OSError) as exc:
        raise ScenarioError(f"topology: {exc}") from None
    raise ScenarioError(f"unknown topology kind {kind!r}")


def _parse_latency(obj) -> LatencySpec:
    _require_keys(obj, "latency", {"kind"}, {"ms", "lo_ms", "hi_ms"})
    kind = obj["kind"]
    if kind == "constant":
        _require_keys(obj, "latency", {"kind", "ms"}, set())
        us = _seconds_to_us(_as_number(obj["ms"], "latency.ms", lo=0.0) / 1000.0)
        return LatencySpec(us, us)
    if kind == "uniform":
        _require_keys(obj, "latency", {"kind", "lo_ms", "hi_ms"}, set())
        lo = _seconds_to_us(_as_number(obj["lo_ms"], "latency.lo_ms", lo=0.0) / 1000.0)
        hi = _seconds_to_us(_as_number(obj["hi_ms"], "latency.hi_ms", lo=0.0) / 1000.0)
        if hi < lo:
            raise ScenarioError("latency.hi_ms must be >= latency.lo_ms")
        return LatencySpec(lo, hi)
    raise ScenarioError("latency.kind must be 'constant' or 'uniform'")


def _parse_capacity(obj) -> CapacitySpec:
    _require_keys(obj, "capacity", {"kind"}, {"value", "lo", "hi", "unidirectional"})
    unidirectional = _as_bool(obj.get("unidirectional", False), "capacity.unidirectional")
    kind = obj["kind"]
    if kind == "constant":
        _require_keys(obj, "capacity", {"kind", "value"}, {"unidirectional"})
        value = _as_int(obj["value"], "capacity.value", lo=0)
        return CapacitySpec("constant", value, value, unidirectional)
    if kind == "uniform":
        _require_keys(obj, "capacity", {"kind", "lo", "hi"}, {"unidirectional"})
        lo = _as_int(obj["lo"], "capacity.lo", lo=0)
        hi = _as_int(obj["hi"], "capacity.hi", lo=lo)
        return CapacitySpec("uniform", lo, hi, unidirectional)
    raise ScenarioError("capacity.kind must be 'constant' or 'uniform'")


def _parse_workload(obj, n_nodes: int) -> WorkloadSpec:
    _require_keys(
        obj,
        "workload",
        {"kind"},
        {"payments", "count", "start_s", "rate_per_s", "interval_s", "amount", "max_fee"},
    )
    kind = obj["kind"]
    if kind == "list":
        _require_keys(obj, "workload", {"kind", "payments"}, set())
        rows = obj["payments"]
        if not isinstance(rows, list) or not rows:
            raise ScenarioError("workload.payments must be a non-empty list")
        payments = []
        for i, row in enumerate(rows):
            where = f"workload.payments[{i}]"
            _require_keys(row, where, {"t_s", "payer", "payee", "amount", "max_fee"}, set())
            t_us = _seconds_to_us(_as_number(row["t_s"], f"{where}.t_s", lo=0.0))
            payer = _as_int(row["payer"], f"{where}.payer", lo=0, hi=n_nodes - 1)
            payee = _as_int(row["payee"], f"{where}.payee", lo=0, hi=n_nodes - 1)
            if payer == payee:
                raise ScenarioError(f"{where}: payer and payee must differ")
            amount = _as_int(row["amount"], f"{where}.amount", lo=1)
            max_fee = _as_int(row["max_fee"], f"{where}.max_fee", lo=0)
            payments.append((t_us, payer, payee, amount, max_fee))
        return WorkloadSpec("list", payments=tuple(payments), count=len(payments))
    if kind in ("poisson", "periodic"):
        required = {"kind", "count", "amount", "max_fee"}
        required.add("rate_per_s" if kind == "poisson" else "interval_s")
        _require_keys(obj, "workload", required, {"start_s"})
        count = _as_int(obj["count"], "workload.count", lo=1)
        start_us = _seconds_to_us(_as_number(obj.get("start_s", 0.0), "workload.start_s", lo=0.0))
        amount = _parse_amount(obj["amount"], "workload.amount")
        if amount == 0 or (isinstance(amount, dict) and amount["lo"] == 0):
            raise ScenarioError("workload.amount must be positive")
        max_fee = _parse_amount(obj["max_fee"], "workload.max_fee")
        if kind == "poisson":
            rate = _as_number(obj["rate_per_s"], "workload.rate_per_s", lo=0.0)
            if rate <= 0:
                raise ScenarioError("workload.rate_per_s must be positive")
            return WorkloadSpec(
                "poisson", count=count, start_us=start_us, rate_per_s=rate,
                amount=amount, max_fee=max_fee,
            )
        interval = _as_number(obj["interval_s"], "workload.interval_s", lo=0.0)
        if interval <= 0:
            raise ScenarioError("workload.interval_s must be positive")
        return WorkloadSpec(
            "periodic", count=count, start_us=start_us,
            interval_us=_seconds_to_us(interval), amount=amount, max_fee=max_fee,
        )
    raise ScenarioError("workload.kind must be one of list/poisson/periodic")


def _parse_adversaries(obj, n_nodes: int) -> dict[int, dict]:
    if not isinstance(obj, dict):
        raise ScenarioError("adversaries must be an object keyed by node id")
    out: dict[int, dict] = {}
    for key, spec in obj.items():
        where = f"adversaries[{key!r}]"
        try:
            node_id = int(key)
        except (TypeError, ValueError):
            raise ScenarioError(f"{where}: key must be a node id") from None
        if not 0 <= node_id < n_nodes:
            raise ScenarioError(f"{where}: node {node_id} does not exist")
        _require_keys(spec, where, {"kind"}, {"delta", "p"})
        kind = spec["kind"]
        if kind not in ADVERSARY_KINDS:
            raise ScenarioError(f"{where}.kind must be one of {ADVERSARY_KINDS}")
        parsed = {"kind": kind}
        if kind in ("counter_cheat", "fee_inflate"):
            _require_keys(spec, where, {"kind", "delta"}, set())
            parsed["delta"] = _as_int(spec["delta"], f"{where}.delta", lo=1)
        elif kind == "dropper":
            _require_keys(spec, where, {"kind", "p"}, set())
            p = _as_number(spec["p"], f"{where}.p", lo=0.0)
            if p > 1.0:
                raise ScenarioError(f"{where}.p must be <= 1")
            parsed["p"] = p
        else:
            _require_keys(spec, where, {"kind"}, set())
        out[node_id] = parsed
    return out


TOP_LEVEL_REQUIRED = {"seed", "horizon_s", "topology", "workload"}
TOP_LEVEL_OPTIONAL = {
    "name",
    "latency",
    "capacity",
    "node_defaults",
    "node_overrides",
    "adversaries",
    "audit",
    "sweep_interval_s",
    "policy_after",
    "measure_after_s",
}


def parse_scenario(obj: dict) -> Scenario:
    _require_keys(obj, "scenario", TOP_LEVEL_REQUIRED, TOP_LEVEL_OPTIONAL)
    seed = _as_int(obj["seed"], "seed")
    horizon = _as_number(obj["horizon_s"], "horizon_s", lo=0.0)
    if horizon <= 0:
        raise ScenarioError("horizon_s must be positive")
    topology = _parse_topology(obj["topology"], seed)
    workload = _parse_workload(obj["workload"], topology.nodes)
    latency = _parse_latency(obj.get("latency", {"kind": "constant", "ms": 10}))
    capacity = _parse_capacity(obj.get("capacity", {"kind": "constant", "value": 10**9}))

    defaults = _parse_node_params(obj.get("node_defaults", {}), "node_defaults")
    overrides: dict[int, dict] = {}
    raw_overrides = obj.get("node_overrides", {})
    if not isinstance(raw_overrides, dict):
        raise ScenarioError("node_overrides must be an object keyed by node id")
    for key, params in raw_overrides.items():
        try:
            node_id = int(key)
        except (TypeError, ValueError):
            raise ScenarioError(f"node_overrides[{key!r}]: key must be a node id") from None
        if not 0 <= node_id < topology.nodes:
            raise ScenarioError(f"node_overrides[{key!r}]: node {node_id} does not exist")
        overrides[node_id] = _parse_node_params(params, f"node_overrides[{key!r}]")

    adversaries = _parse_adversaries(obj.get("adversaries", {}), topology.nodes)
    audit = _as_bool(obj.get("audit", False), "audit")

    ttl_us = defaults.get("ttl_us", 30_000_000)
    if "sweep_interval_s" in obj:
        sweep_s = _as_number(obj["sweep_interval_s"], "sweep_interval_s", lo=0.0)
        if sweep_s <= 0:
            raise ScenarioError("sweep_interval_s must be positive")
        sweep_us = _seconds_to_us(sweep_s)
    else:
        sweep_us = max(1, ttl_us // 2)

    policy_after = None
    if "policy_after" in obj:
        pa = obj["policy_after"]
        _require_keys(pa, "policy_after", {"t_s", "policy"}, set())
        policy_after = (
            _seconds_to_us(_as_number(pa["t_s"], "policy_after.t_s", lo=0.0)),
            parse_policy(pa["policy"], "policy_after.policy"),
        )

    measure_after_us = None
    if "measure_after_s" in obj:
        measure_after_us = _seconds_to_us(
            _as_number(obj["measure_after_s"], "measure_after_s", lo=0.0)
        )

    name = obj.get("name", "")
    if not isinstance(name, str):
        raise ScenarioError("name must be a string")

    return Scenario(
        seed=seed,
        horizon_us=_seconds_to_us(horizon),
        topology=topology,
        workload=workload,
        latency=latency,
        capacity=capacity,
        node_defaults=defaults,
        node_overrides=overrides,
        adversaries=adversaries,
        audit=audit,
        sweep_interval_us=sweep_us,
        policy_after=policy_after,
        measure_after_us=measure_after_us,
        name=name,
    )


def load_scenario(path: str) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ScenarioError("scenario must be a JSON object")
    return parse_scenario(obj)
