"""Independent reference answers for route quality checks.

Plain BFS and Dijkstra over the channel book, written with no knowledge of
the discovery protocol, so simulation results can be judged against
ground truth.
"""

from __future__ import annotations

import heapq

from ..channels import ChannelBook, can_forward


def shortest_path_hops(
    book: ChannelBook,
    src: int,
    dst: int,
    amount: int | None = None,
) -> tuple[int, list[int]] | None:
    """Fewest-hop path from src to dst; edges must carry amount if given.

    Returns (hop_count, path) or None when dst is unreachable.
    """
    if src == dst:
        return 0, [src]
    prev: dict[int, int] = {src: src}
    frontier = [src]
    while frontier:
        nxt = []
        for u in frontier:
            for v in book.neighbors(u):
                if v in prev:
                    continue
                channel = book.get(u, v)
                if amount is not None and not can_forward(channel, u, amount):
                    continue
                prev[v] = u
                if v == dst:
                    path = [v]
                    while path[-1] != src:
                        path.append(prev[path[-1]])
                    path.reverse()
                    return len(path) - 1, path
                nxt.append(v)
        frontier = nxt
    return None


def cheapest_fee_path(
    book: ChannelBook,
    src: int,
    dst: int,
    fees: dict[int, int],
    amount: int | None = None,
) -> tuple[int, list[int]] | None:
    """Path minimizing the sum of interior nodes' fees (endpoints charge 0).

    Ties go to fewer hops, then lexicographically smaller paths, so the
    answer is unique and reproducible. Returns (total_fee, path) or None.
    """
    if src == dst:
        return 0, [src]
    # heap entries (fee, hops, node, parent): ties settle by fewer hops,
    # then smaller node and parent ids, making the answer reproducible
    heap = [(0, 0, src, src)]
    prev: dict[int, int] = {}
    settled: set[int] = set()
    while heap:
        fee, hops, u, parent = heapq.heappop(heap)
        if u in settled:
            continue
        settled.add(u)
        prev[u] = parent
        if u == dst:
            path = [u]
            while path[-1] != src:
                path.append(prev[path[-1]])
            path.reverse()
            return fee, path
        for v in book.neighbors(u):
            if v in settled:
                continue
            channel = book.get(u, v)
            if amount is not None and not can_forward(channel, u, amount):
                continue
            step_fee = 0 if v == dst else fees.get(v, 0)
            heapq.heappush(heap, (fee + step_fee, hops + 1, v, u))
    return None
