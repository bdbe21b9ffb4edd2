"""Deterministic topology generation and JSON exchange format.

Generators are hand-rolled on random.Random so a (kind, params, seed)
triple always yields the same edge set, independent of any graph library's
version. Node ids are always 0..n-1.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field


@dataclass
class Topology:
    nodes: int
    edges: list[tuple[int, int]]
    kind: str = "explicit"
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        seen = set()
        normalized = []
        for u, v in self.edges:
            if u == v:
                raise ValueError(f"self-loop at node {u}")
            if not (0 <= u < self.nodes and 0 <= v < self.nodes):
                raise ValueError(f"edge ({u}, {v}) references a missing node")
            key = (u, v) if u < v else (v, u)
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
            normalized.append(key)
        self.edges = sorted(normalized)

    def adjacency(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {i: [] for i in range(self.nodes)}
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        for nbrs in adj.values():
            nbrs.sort()
        return adj

    def is_connected(self) -> bool:
        if self.nodes == 0:
            return True
        adj = self.adjacency()
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == self.nodes


def line(n: int) -> Topology:
    if n < 2:
        raise ValueError("line needs at least 2 nodes")
    return Topology(n, [(i, i + 1) for i in range(n - 1)], "line", {"n": n})


def ring(n: int) -> Topology:
    if n < 3:
        raise ValueError("ring needs at least 3 nodes")
    edges = [(i, i + 1) for i in range(n - 1)] + [(0, n - 1)]
    return Topology(n, edges, "ring", {"n": n})


def grid(rows: int, cols: int) -> Topology:
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise ValueError("grid needs at least 2 nodes")
    edges = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                edges.append((i, i + 1))
            if r + 1 < rows:
                edges.append((i, i + cols))
    return Topology(rows * cols, edges, "grid", {"rows": rows, "cols": cols})


def erdos_renyi(n: int, p: float, seed: int) -> Topology:
    """G(n, p) reduced to its largest connected component, relabeled 0..m-1."""
    if n < 2:
        raise ValueError("erdos_renyi needs at least 2 nodes")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")
    rng = random.Random(seed)
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < p:
                edges.append((u, v))

    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in edges:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
    components: dict[int, list[int]] = {}
    for x in range(n):
        components.setdefault(find(x), []).append(x)
    largest = max(components.values(), key=lambda c: (len(c), -min(c)))
    if len(largest) < 2:
        raise ValueError("largest component has fewer than 2 nodes; raise p or n")
    relabel = {old: new for new, old in enumerate(sorted(largest))}
    kept = [
        (relabel[u], relabel[v]) for u, v in edges if u in relabel and v in relabel
    ]
    return Topology(len(largest), kept, "erdos_renyi", {"n": n, "p": p, "seed": seed})


def barabasi_albert(n: int, m: int, seed: int) -> Topology:
    """Preferential attachment: each new node links to m existing ones."""
    if m < 1 or n <= m:
        raise ValueError("need n > m >= 1")
    rng = random.Random(seed)
    edges = []
    repeated: list[int] = []
    targets = list(range(m))
    for new in range(m, n):
        for t in targets:
            edges.append((t, new))
            repeated.append(t)
            repeated.append(new)
        chosen: set[int] = set()
        while len(chosen) < m:
            chosen.add(rng.choice(repeated))
        targets = sorted(chosen)
    return Topology(n, edges, "barabasi_albert", {"n": n, "m": m, "seed": seed})


GENERATORS = {
    "line": line,
    "ring": ring,
    "grid": grid,
    "erdos_renyi": erdos_renyi,
    "barabasi_albert": barabasi_albert,
}


def save_topology(topo: Topology, path: str) -> None:
    payload = {
        "nodes": topo.nodes,
        "edges": [list(e) for e in topo.edges],
        "kind": topo.kind,
        "params": topo.params,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_topology(path: str) -> Topology:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if not isinstance(payload, dict):
        raise ValueError("topology file must hold a JSON object")
    allowed = {"nodes", "edges", "kind", "params"}
    unknown = set(payload) - allowed
    if unknown:
        raise ValueError(f"unknown topology keys: {sorted(unknown)}")
    if "nodes" not in payload or "edges" not in payload:
        raise ValueError("topology file needs 'nodes' and 'edges'")
    edges = [tuple(e) for e in payload["edges"]]
    return Topology(
        payload["nodes"], edges, payload.get("kind", "explicit"), payload.get("params", {})
    )
