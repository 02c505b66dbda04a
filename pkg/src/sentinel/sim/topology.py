"""Radio topology and sink-rooted routing tree.

Links connect every pair of nodes within radio range. Routing is a
shortest-hop BFS tree rooted at the sink; among equal-hop parent
candidates the lexicographically smallest node id wins, which makes the
tree independent of insertion order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .types import finite


class TopologyError(ValueError):
    pass


@dataclass
class Topology:
    adjacency: dict[str, list[str]]
    routing: dict[str, str]
    hop_count: dict[str, int]
    disconnected: set[str]
    links: set[tuple[str, str]] = field(default_factory=set)

    def path_to_sink(self, node_id: str) -> list[str] | None:
        """[node, ..., sink] or None when the node has no route."""
        if node_id in self.disconnected or node_id not in self.hop_count:
            return None
        path = [node_id]
        cur = node_id
        while cur in self.routing:
            cur = self.routing[cur]
            path.append(cur)
        return path


def _grid_adjacency(positions: dict[str, tuple[float, float]], radio_range_m: float) -> tuple[dict[str, list[str]], set[tuple[str, str]]]:
    cell = radio_range_m if radio_range_m > 0 else 1.0
    buckets: dict[tuple[int, int], list[str]] = {}
    for nid, (x, y) in positions.items():
        buckets.setdefault((int(x // cell), int(y // cell)), []).append(nid)
    adjacency: dict[str, list[str]] = {nid: [] for nid in positions}
    links: set[tuple[str, str]] = set()
    r2 = radio_range_m * radio_range_m
    for (cx, cy), members in buckets.items():
        neighbor_cells = [
            buckets.get((cx + dx, cy + dy), [])
            for dx in (-1, 0, 1)
            for dy in (-1, 0, 1)
        ]
        for nid in members:
            x, y = positions[nid]
            for cell_members in neighbor_cells:
                for other in cell_members:
                    if other <= nid:
                        continue
                    ox, oy = positions[other]
                    dx, dy = x - ox, y - oy
                    if dx * dx + dy * dy <= r2:
                        adjacency[nid].append(other)
                        adjacency[other].append(nid)
                        links.add((nid, other))
    for nid in adjacency:
        adjacency[nid].sort()
    return adjacency, links


def build_topology(
    placements: list[tuple[str, float, float]],
    sink_id: str,
    radio_range_m: float,
    relay_blocked: frozenset[str] | set[str] = frozenset(),
) -> Topology:
    """BFS shortest-hop tree from the sink over all in-range links.

    Nodes in ``relay_blocked`` may not forward traffic: they can still hang
    off the tree as leaves (their own emissions need a route to be judged
    deliverable) but never appear as another node's parent.
    """
    seen: set[str] = set()
    positions: dict[str, tuple[float, float]] = {}
    for nid, x, y in placements:
        if nid in seen:
            raise TopologyError(f"duplicate node_id {nid!r}")
        if not (finite(x) and finite(y)):
            raise TopologyError(f"non-finite position for {nid!r}")
        seen.add(nid)
        positions[nid] = (float(x), float(y))
    if sink_id not in positions:
        raise TopologyError(f"sink {sink_id!r} not present in placements")

    adjacency, links = _grid_adjacency(positions, radio_range_m)

    hop_count: dict[str, int] = {sink_id: 0}
    routing: dict[str, str] = {}
    level = [sink_id]
    while level:
        next_level: list[str] = []
        for nid in level:
            if nid != sink_id and nid in relay_blocked:
                continue
            for nb in adjacency[nid]:
                if nb not in hop_count:
                    hop_count[nb] = hop_count[nid] + 1
                    routing[nb] = nid
                    next_level.append(nb)
        next_level.sort()
        level = next_level

    # Blocked nodes were reachable only if a relay-capable neighbor was;
    # attach any that BFS missed as leaves of their best reachable neighbor.
    for nid in sorted(positions):
        if nid in hop_count:
            continue
        candidates = [
            (hop_count[nb], nb)
            for nb in adjacency[nid]
            if nb in hop_count and (nb == sink_id or nb not in relay_blocked)
        ]
        if candidates:
            hop, parent = min(candidates)
            hop_count[nid] = hop + 1
            routing[nid] = parent

    disconnected = {nid for nid in positions if nid not in hop_count}
    return Topology(
        adjacency=adjacency,
        routing=routing,
        hop_count=hop_count,
        disconnected=disconnected,
        links=links,
    )
