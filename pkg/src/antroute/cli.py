"""Command line front end: run simulations, generate topologies, query oracles.

Exit codes: 0 on success, 2 for configuration or usage errors, 3 when a
run aborts on an internal invariant violation. Set ANTROUTE_LOG=debug (or
info/warning) for diagnostics on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

from .channels import Channel, ChannelBook
from .kernels import IMPLEMENTATION
from .sim.engine import InvariantViolation, Simulation
from .sim.oracle import cheapest_fee_path, shortest_path_hops
from .sim.scenario import ScenarioError, load_scenario, parse_policy
from .sim.topology import GENERATORS, load_topology, save_topology

log = logging.getLogger("antroute")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3


def _setup_logging() -> None:
    level_name = os.environ.get("ANTROUTE_LOG", "warning").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(
        level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )


def _parse_policy_arg(text: str):
    """Shorthand: flood_all | top_k:K | pareto_weighted:ALPHA,K."""
    kind, _, params = text.partition(":")
    try:
        if kind == "flood_all":
            return parse_policy({"kind": "flood_all"})
        if kind == "top_k":
            return parse_policy({"kind": "top_k", "k": int(params)})
        if kind == "pareto_weighted":
            alpha, k = params.split(",")
            return parse_policy({"kind": "pareto_weighted", "alpha": float(alpha), "k": int(k)})
    except (ValueError, ScenarioError) as exc:
        raise ScenarioError(f"bad --policy {text!r}: {exc}") from None
    raise ScenarioError(f"bad --policy {text!r}")


def _parse_adversary_arg(text: str) -> tuple[int, dict]:
    """Shorthand: NODE=kind[:param], e.g. 7=dropper:0.5 or 3=counter_cheat:2."""
    try:
        node_text, spec = text.split("=", 1)
        node_id = int(node_text)
        kind, _, param = spec.partition(":")
        if kind in ("counter_cheat", "fee_inflate"):
            return node_id, {"kind": kind, "delta": int(param)}
        if kind == "dropper":
            return node_id, {"kind": "dropper", "p": float(param)}
        if kind == "transparent_cheat" and not param:
            return node_id, {"kind": "transparent_cheat"}
    except ValueError:
        pass
    raise ScenarioError(f"bad --adversary {text!r}")


def cmd_run(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario.seed = args.seed
    if args.policy is not None:
        policy = _parse_policy_arg(args.policy)
        scenario.node_defaults["policy"] = policy
        for params in scenario.node_overrides.values():
            params.pop("policy", None)
    for text in args.adversary or ():
        node_id, spec = _parse_adversary_arg(text)
        if not 0 <= node_id < scenario.topology.nodes:
            raise ScenarioError(f"--adversary node {node_id} does not exist")
        scenario.adversaries[node_id] = spec

    os.makedirs(args.out, exist_ok=True)
    log_handle = None
    if args.event_log:
        log_handle = open(os.path.join(args.out, "events.jsonl"), "w", encoding="utf-8")
    started = time.perf_counter()
    try:
        sim = Simulation(scenario, event_log=log_handle)
        metrics = sim.run()
    finally:
        if log_handle is not None:
            log_handle.close()
    elapsed = time.perf_counter() - started

    with open(os.path.join(args.out, "metrics.json"), "w", encoding="utf-8") as fh:
        fh.write(metrics.to_json())
    with open(os.path.join(args.out, "payments.csv"), "w", encoding="utf-8") as fh:
        fh.write(metrics.to_csv())

    agg = metrics.to_dict()["aggregate"]
    log.info("kernel=%s elapsed=%.2fs", IMPLEMENTATION, elapsed)
    print(
        f"payments={agg['payments']} successes={agg['successes']} "
        f"success_rate={agg['success_rate']:.3f} messages={agg['messages']['total']} "
        f"out={args.out}"
    )
    return EXIT_OK


def cmd_topo(args: argparse.Namespace) -> int:
    kind = args.kind
    try:
        if kind == "line":
            topo = GENERATORS["line"](args.n)
        elif kind == "ring":
            topo = GENERATORS["ring"](args.n)
        elif kind == "grid":
            topo = GENERATORS["grid"](args.rows, args.cols)
        elif kind == "erdos_renyi":
            topo = GENERATORS["erdos_renyi"](args.n, args.p, args.seed)
        else:
            topo = GENERATORS["barabasi_albert"](args.n, args.m, args.seed)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"topology: {exc}") from None
    save_topology(topo, args.out)
    print(f"nodes={topo.nodes} edges={len(topo.edges)} connected={topo.is_connected()} out={args.out}")
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    topo = load_topology(args.topology)
    book = ChannelBook()
    for u, v in topo.edges:
        book.add(Channel(u, v, args.capacity, args.capacity))
    fees = {node: args.fee for node in range(topo.nodes)}
    for text in args.node_fee or ():
        try:
            node_text, fee_text = text.split("=", 1)
            fees[int(node_text)] = int(fee_text)
        except ValueError:
            raise ScenarioError(f"bad --node-fee {text!r}") from None
    hops = shortest_path_hops(book, args.payer, args.payee, args.amount)
    cheapest = cheapest_fee_path(book, args.payer, args.payee, fees, args.amount)
    out = {
        "payer": args.payer,
        "payee": args.payee,
        "hops": None if hops is None else hops[0],
        "path": None if hops is None else hops[1],
        "cheapest_fee": None if cheapest is None else cheapest[0],
        "cheapest_path": None if cheapest is None else cheapest[1],
    }
    print(json.dumps(out, sort_keys=True))
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    try:
        with open(args.metrics, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"cannot read metrics: {exc}") from None

    def show(label: str, agg: dict) -> None:
        lat = agg["discovery_latency_us"]
        print(f"[{label}]")
        print(f"  payments        {agg['payments']}")
        print(f"  successes       {agg['successes']} ({agg['success_rate']:.1%})")
        print(
            "  discovery ms    "
            f"mean={lat['mean'] / 1000:.1f} p50={lat['p50'] / 1000:.1f} "
            f"p90={lat['p90'] / 1000:.1f} max={lat['max'] / 1000:.1f}"
        )
        msgs = agg["messages"]
        print(
            "  messages        "
            f"total={msgs['total']} pheromone={msgs['pheromone']} matched={msgs['matched']} "
            f"confirmed={msgs['confirmed']} ack={msgs['ack']} replay={msgs['replay']}"
        )
        print(f"  msgs/payment    {agg['messages_per_payment']:.1f}")
        print(f"  stretch         mean={agg['stretch']['mean']:.3f} max={agg['stretch']['max']:.3f}")
        if agg["failures"]:
            parts = ", ".join(f"{k}={v}" for k, v in sorted(agg["failures"].items()))
            print(f"  failures        {parts}")

    show("all", data["aggregate"])
    if "measured" in data:
        show("measured", data["measured"])
    counters = data["counters"]
    print("[counters]")
    for key in sorted(counters):
        if key == "blocked":
            continue
        print(f"  {key:<28} {counters[key]}")
    if counters.get("blocked"):
        parts = ", ".join(f"{k}={v}" for k, v in sorted(counters["blocked"].items()))
        print(f"  blocked                      {parts}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="antroute",
        description="Ant-inspired payment route discovery simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario file")
    p_run.add_argument("scenario", help="scenario JSON file")
    p_run.add_argument("--out", default=".", help="output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p_run.add_argument("--policy", default=None, help="override broadcast policy, e.g. top_k:3")
    p_run.add_argument(
        "--adversary",
        action="append",
        metavar="NODE=KIND[:PARAM]",
        help="add an adversary, e.g. 7=dropper:0.5 (repeatable)",
    )
    p_run.add_argument("--event-log", action="store_true", help="write events.jsonl")
    p_run.set_defaults(func=cmd_run)

    p_topo = sub.add_parser("topo", help="generate a topology file")
    p_topo.add_argument(
        "kind", choices=["line", "ring", "grid", "erdos_renyi", "barabasi_albert"]
    )
    p_topo.add_argument("--n", type=int, help="node count")
    p_topo.add_argument("--p", type=float, help="edge probability (erdos_renyi)")
    p_topo.add_argument("--m", type=int, help="links per new node (barabasi_albert)")
    p_topo.add_argument("--rows", type=int, help="grid rows")
    p_topo.add_argument("--cols", type=int, help="grid columns")
    p_topo.add_argument("--seed", type=int, default=0)
    p_topo.add_argument("--out", required=True, help="output topology JSON file")
    p_topo.set_defaults(func=cmd_topo)

    p_oracle = sub.add_parser("oracle", help="reference shortest/cheapest paths")
    p_oracle.add_argument("--topology", required=True, help="topology JSON file")
    p_oracle.add_argument("--payer", type=int, required=True)
    p_oracle.add_argument("--payee", type=int, required=True)
    p_oracle.add_argument("--amount", type=int, default=None, help="gate edges by capacity")
    p_oracle.add_argument("--capacity", type=int, default=10**9, help="per-direction capacity")
    p_oracle.add_argument("--fee", type=int, default=0, help="default per-node fee")
    p_oracle.add_argument(
        "--node-fee", action="append", metavar="NODE=FEE", help="per-node fee override"
    )
    p_oracle.set_defaults(func=cmd_oracle)

    p_report = sub.add_parser("report", help="summarize a metrics.json")
    p_report.add_argument("metrics", help="metrics JSON file from a run")
    p_report.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
