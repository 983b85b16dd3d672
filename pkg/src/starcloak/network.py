"""Road network substrate: junction graph, degree-2 segments, stars and the star graph."""

from __future__ import annotations

import heapq
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

log = logging.getLogger(__name__)

# equirectangular metres per degree of latitude
METERS_PER_DEGREE = 111_320.0


class NetworkError(Exception):
    """Base class for road-network loading problems."""


class ParseError(NetworkError):
    def __init__(self, path: str, lineno: int, message: str) -> None:
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


class IntegrityError(NetworkError):
    pass


@dataclass(frozen=True)
class Edge:
    edge_id: int
    a: int
    b: int
    length: float

    def other(self, node: int) -> int:
        return self.b if node == self.a else self.a


class RoadNetwork:
    """Undirected road graph with node coordinates in degrees and edge lengths in metres."""

    def __init__(
        self,
        nodes: Mapping[int, tuple[float, float]],
        edges: Iterable[Edge],
    ) -> None:
        self.nodes: dict[int, tuple[float, float]] = dict(nodes)
        self.edges: dict[int, Edge] = {}
        self.adjacency: dict[int, list[tuple[int, int]]] = {n: [] for n in self.nodes}
        for e in edges:
            if e.edge_id in self.edges:
                raise IntegrityError(f"duplicate edge id {e.edge_id}")
            if e.a == e.b:
                raise IntegrityError(f"edge {e.edge_id} is a self-loop on node {e.a}")
            for end in (e.a, e.b):
                if end not in self.nodes:
                    raise IntegrityError(f"edge {e.edge_id} references missing node {end}")
            if e.length < 0:
                raise IntegrityError(f"edge {e.edge_id} has negative length")
            self.edges[e.edge_id] = e
            self.adjacency[e.a].append((e.edge_id, e.b))
            self.adjacency[e.b].append((e.edge_id, e.a))

    def degree(self, node: int) -> int:
        return len(self.adjacency[node])

    def __repr__(self) -> str:
        return f"RoadNetwork(nodes={len(self.nodes)}, edges={len(self.edges)})"

    def bounds(self) -> tuple[float, float, float, float]:
        lons = [c[0] for c in self.nodes.values()]
        lats = [c[1] for c in self.nodes.values()]
        return min(lons), min(lats), max(lons), max(lats)


def _data_lines(path: Path) -> Iterator[tuple[int, list[str]]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, line.split()


def load_network(nodes_source: str | Path, edges_source: str | Path) -> RoadNetwork:
    """Parse whitespace-separated node and edge files.

    Node lines are ``node_id longitude latitude``; edge lines are
    ``edge_id node_a node_b length``.  ``#`` starts a comment line.
    """
    nodes: dict[int, tuple[float, float]] = {}
    for lineno, parts in _data_lines(Path(nodes_source)):
        if len(parts) != 3:
            raise ParseError(str(nodes_source), lineno, f"expected 3 fields, got {len(parts)}")
        try:
            nid, lon, lat = int(parts[0]), float(parts[1]), float(parts[2])
        except ValueError as exc:
            raise ParseError(str(nodes_source), lineno, str(exc)) from None
        if nid in nodes:
            raise ParseError(str(nodes_source), lineno, f"duplicate node id {nid}")
        nodes[nid] = (lon, lat)

    edges = []
    for lineno, parts in _data_lines(Path(edges_source)):
        if len(parts) != 4:
            raise ParseError(str(edges_source), lineno, f"expected 4 fields, got {len(parts)}")
        try:
            eid, a, b, length = int(parts[0]), int(parts[1]), int(parts[2]), float(parts[3])
        except ValueError as exc:
            raise ParseError(str(edges_source), lineno, str(exc)) from None
        for end in (a, b):
            if end not in nodes:
                raise IntegrityError(
                    f"{edges_source}:{lineno}: edge {eid} references missing node {end}"
                )
        edges.append(Edge(eid, a, b, length))

    net = RoadNetwork(nodes, edges)
    log.info("loaded %d nodes, %d edges", len(net.nodes), len(net.edges))
    return net


def write_network(network: RoadNetwork, nodes_path: str | Path, edges_path: str | Path) -> None:
    with open(nodes_path, "w", encoding="utf-8") as fh:
        for nid, (lon, lat) in sorted(network.nodes.items()):
            fh.write(f"{nid} {lon:.7f} {lat:.7f}\n")
    with open(edges_path, "w", encoding="utf-8") as fh:
        for e in sorted(network.edges.values(), key=lambda e: e.edge_id):
            fh.write(f"{e.edge_id} {e.a} {e.b} {e.length:.3f}\n")


# ---------------------------------------------------------------------------
# segments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    """Maximal chain of edges whose interior nodes all have degree 2.

    ``nodes`` runs from terminal ``nodes[0]`` to terminal ``nodes[-1]``;
    ``edges[i]`` joins ``nodes[i]`` and ``nodes[i + 1]``.
    """

    segment_id: int
    edges: tuple[int, ...]
    nodes: tuple[int, ...]
    length: float

    @property
    def terminals(self) -> tuple[int, int]:
        return self.nodes[0], self.nodes[-1]

    @property
    def interior(self) -> tuple[int, ...]:
        return self.nodes[1:-1]


def _walk_chain(net: RoadNetwork, start: int, first_edge: int, used: set[int]) -> tuple[list[int], list[int]]:
    nodes = [start]
    edges = []
    node, eid = start, first_edge
    while True:
        used.add(eid)
        edges.append(eid)
        node = net.edges[eid].other(node)
        nodes.append(node)
        if net.degree(node) != 2 or node == start:
            return nodes, edges
        nxt = [e for e, _ in net.adjacency[node] if e not in used]
        if not nxt:
            return nodes, edges
        eid = nxt[0]


def build_segments(network: RoadNetwork) -> dict[int, Segment]:
    """Collapse degree-2 chains into segments; every edge lands in exactly one segment."""
    used: set[int] = set()
    chains: list[tuple[list[int], list[int]]] = []
    for node in sorted(network.nodes):
        d = network.degree(node)
        if d == 0:
            log.warning("isolated node %s ignored", node)
            continue
        if d == 2:
            continue
        for eid, _ in sorted(network.adjacency[node]):
            if eid not in used:
                chains.append(_walk_chain(network, node, eid, used))
    # whatever is left lies on cycles made only of degree-2 nodes
    for node in sorted(network.nodes):
        if network.degree(node) != 2:
            continue
        free = sorted(e for e, _ in network.adjacency[node] if e not in used)
        if free:
            log.warning("degree-2 cycle through node %s split at that node", node)
            chains.append(_walk_chain(network, node, free[0], used))

    segments = {}
    for sid, (nodes, edges) in enumerate(chains):
        length = sum(network.edges[e].length for e in edges)
        segments[sid] = Segment(sid, tuple(edges), tuple(nodes), length)
    return segments


# ---------------------------------------------------------------------------
# stars
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Star:
    anchor: int
    segments: frozenset[int]

    @property
    def star_id(self) -> int:
        return self.anchor


def build_stars(network: RoadNetwork, segments: Mapping[int, Segment]) -> dict[int, Star]:
    incident: dict[int, set[int]] = {}
    for seg in segments.values():
        for t in seg.terminals:
            if network.degree(t) >= 3:
                incident.setdefault(t, set()).add(seg.segment_id)
    return {
        v: Star(v, frozenset(incident.get(v, ())))
        for v in sorted(network.nodes)
        if network.degree(v) >= 3
    }


@dataclass
class StarGraph:
    """Stars as vertices; adjacent iff they share a segment. Every edge has unit length."""

    stars: dict[int, Star]
    adjacency: dict[int, frozenset[int]]
    segment_stars: dict[int, tuple[int, ...]] = field(default_factory=dict)

    def __contains__(self, star: int) -> bool:
        return star in self.stars

    def segments_of(self, stars: Iterable[int]) -> set[int]:
        out: set[int] = set()
        for s in stars:
            out |= self.stars[s].segments
        return out


def build_star_graph(stars: Mapping[int, Star]) -> StarGraph:
    segment_stars: dict[int, list[int]] = {}
    for sid in sorted(stars):
        for seg in stars[sid].segments:
            segment_stars.setdefault(seg, []).append(sid)
    adjacency: dict[int, set[int]] = {sid: set() for sid in stars}
    for owners in segment_stars.values():
        for a in owners:
            for b in owners:
                if a != b:
                    adjacency[a].add(b)
    return StarGraph(
        dict(stars),
        {k: frozenset(v) for k, v in adjacency.items()},
        {k: tuple(v) for k, v in segment_stars.items()},
    )


def hop_distance(star_graph: StarGraph, a: int, b: int, cap: int | None = None) -> int | None:
    """Breadth-first hop count from ``a`` to ``b``; ``None`` when farther than ``cap`` or unreachable."""
    if a not in star_graph.stars:
        raise KeyError(f"unknown star {a}")
    if b not in star_graph.stars:
        raise KeyError(f"unknown star {b}")
    if a == b:
        return 0
    seen = {a}
    frontier = [a]
    depth = 0
    while frontier:
        depth += 1
        if cap is not None and depth > cap:
            return None
        nxt = []
        for s in frontier:
            for t in star_graph.adjacency[s]:
                if t == b:
                    return depth
                if t not in seen:
                    seen.add(t)
                    nxt.append(t)
        frontier = nxt
    return None


def hop_distances_from(star_graph: StarGraph, source: int, cap: int | None = None) -> dict[int, int]:
    dist = {source: 0}
    queue = deque([source])
    while queue:
        s = queue.popleft()
        d = dist[s]
        if cap is not None and d >= cap:
            continue
        for t in star_graph.adjacency[s]:
            if t not in dist:
                dist[t] = d + 1
                queue.append(t)
    return dist


def stars_within(star_graph: StarGraph, star: int, radius: int) -> frozenset[int]:
    if radius < 0:
        raise ValueError("radius must be non-negative")
    return frozenset(hop_distances_from(star_graph, star, cap=radius))


# ---------------------------------------------------------------------------
# subgraphs
# ---------------------------------------------------------------------------


def subgraph_edges(segments: Mapping[int, Segment], segment_ids: Iterable[int]) -> set[int]:
    out: set[int] = set()
    for sid in segment_ids:
        out.update(segments[sid].edges)
    return out


def border_nodes_of_edges(network: RoadNetwork, edge_ids: Iterable[int]) -> set[int]:
    """Nodes touched by ``edge_ids`` that also have an incident edge outside the set."""
    eset = set(edge_ids)
    touched: set[int] = set()
    for eid in eset:
        e = network.edges[eid]
        touched.add(e.a)
        touched.add(e.b)
    return {v for v in touched if any(e not in eset for e, _ in network.adjacency[v])}


def border_nodes(network: RoadNetwork, segments: Mapping[int, Segment], segment_ids: Iterable[int]) -> set[int]:
    return border_nodes_of_edges(network, subgraph_edges(segments, segment_ids))


# ---------------------------------------------------------------------------
# bundled view used by the rest of the package
# ---------------------------------------------------------------------------


class NetworkIndex:
    """Network plus every structure derived from it, with memoised hop-radius lookups.

    Immutable after construction apart from internal caches, which only ever
    grow with values that are pure functions of the network.
    """

    def __init__(self, network: RoadNetwork, radius_unit: str = "hops") -> None:
        if radius_unit not in ("hops", "meters"):
            raise ValueError(f"unknown radius unit {radius_unit!r}")
        self.network = network
        self.radius_unit = radius_unit
        self.segments = build_segments(network)
        self.stars = build_stars(network, self.segments)
        self.star_graph = build_star_graph(self.stars)
        self.edge_segment: dict[int, int] = {}
        for seg in self.segments.values():
            for eid in seg.edges:
                self.edge_segment[eid] = seg.segment_id
        node_segs: dict[int, set[int]] = {}
        for seg in self.segments.values():
            for t in seg.terminals:
                node_segs.setdefault(t, set()).add(seg.segment_id)
        self.node_segments: dict[int, tuple[int, ...]] = {n: tuple(sorted(v)) for n, v in node_segs.items()}
        self._within: dict[tuple[int, float], frozenset[int]] = {}
        self._hops: dict[int, dict[int, int]] = {}
        self._star_stats: dict[int, tuple[int, int, int]] = {}

    # -- star helpers -----------------------------------------------------
    def segment_stars(self, segment_id: int) -> tuple[int, ...]:
        return self.star_graph.segment_stars.get(segment_id, ())

    def star_segments(self, star: int) -> frozenset[int]:
        return self.stars[star].segments

    def stars_within(self, star: int, radius: float) -> frozenset[int]:
        key = (star, radius)
        hit = self._within.get(key)
        if hit is None:
            if self.radius_unit == "hops":
                hit = stars_within(self.star_graph, star, int(radius))
            else:
                dist = self.node_distances(star, limit=radius)
                hit = frozenset(s for s in self.stars if dist.get(s, math.inf) <= radius)
            self._within[key] = hit
        return hit

    def hops_from(self, star: int) -> dict[int, int]:
        hit = self._hops.get(star)
        if hit is None:
            hit = hop_distances_from(self.star_graph, star)
            self._hops[star] = hit
        return hit

    def hop(self, a: int, b: int) -> int | None:
        return self.hops_from(a).get(b)

    def segment_count(self, stars: Iterable[int]) -> int:
        return len(self.star_graph.segments_of(stars))

    def star_stats(self, star: int) -> tuple[int, int, int]:
        """(segment count, border-node count, edge count) of a star viewed as a subgraph."""
        hit = self._star_stats.get(star)
        if hit is None:
            segs = self.stars[star].segments
            edges = subgraph_edges(self.segments, segs)
            hit = (len(segs), len(border_nodes_of_edges(self.network, edges)), len(edges))
            self._star_stats[star] = hit
        return hit

    # -- distances ----------------------------------------------------------
    def node_distances(self, source: int, limit: float = math.inf) -> dict[int, float]:
        return dijkstra(self.network, {source: 0.0}, limit)

    def segment_neighbors(self, segment_id: int) -> list[int]:
        """Segments sharing a terminal node with ``segment_id``, ascending."""
        seg = self.segments[segment_id]
        out = {t for n in seg.terminals for t in self.node_segments.get(n, ())}
        out.discard(segment_id)
        return sorted(out)

    def ball_segments(self, star: int, radius: float) -> frozenset[int]:
        return frozenset(self.star_graph.segments_of(self.stars_within(star, radius)))

    def position_distances(self, segment_id: int, offset: float, limit: float = math.inf) -> dict[int, float]:
        """Network distance from a point on a segment to every node within ``limit``."""
        seg = self.segments[segment_id]
        a, b = seg.terminals
        sources = {a: offset}
        sources[b] = min(sources.get(b, math.inf), seg.length - offset)
        return dijkstra(self.network, sources, limit)

    def border_nodes(self, segment_ids: Iterable[int]) -> set[int]:
        return border_nodes(self.network, self.segments, segment_ids)

    def segment_point(self, segment_id: int, offset: float) -> tuple[int, float]:
        """Convert an offset along a segment into (edge_id, offset from that edge's ``a`` end)."""
        seg = self.segments[segment_id]
        remaining = min(max(offset, 0.0), seg.length)
        for i, eid in enumerate(seg.edges):
            e = self.network.edges[eid]
            if remaining <= e.length or i == len(seg.edges) - 1:
                along = min(remaining, e.length)
                # segment walks nodes[i] -> nodes[i+1]; flip when the edge is stored reversed
                return eid, along if e.a == seg.nodes[i] else e.length - along
            remaining -= e.length
        raise AssertionError("unreachable")

    def segment_offset(self, edge_id: int, edge_offset: float) -> float:
        seg = self.segments[self.edge_segment[edge_id]]
        before = 0.0
        for i, eid in enumerate(seg.edges):
            e = self.network.edges[eid]
            if eid == edge_id:
                along = edge_offset if e.a == seg.nodes[i] else e.length - edge_offset
                return before + along
            before += e.length
        raise KeyError(edge_id)


def dijkstra(network: RoadNetwork, sources: Mapping[int, float], limit: float = math.inf) -> dict[int, float]:
    dist: dict[int, float] = {}
    heap = [(d, n) for n, d in sources.items()]
    heapq.heapify(heap)
    while heap:
        d, n = heapq.heappop(heap)
        if n in dist:
            continue
        if d > limit:
            break
        dist[n] = d
        for eid, m in network.adjacency[n]:
            if m not in dist:
                heapq.heappush(heap, (d + network.edges[eid].length, m))
    return dist


def project(lon: float, lat: float, lat0: float) -> tuple[float, float]:
    """Equirectangular projection to metres around reference latitude ``lat0``."""
    return (
        lon * METERS_PER_DEGREE * math.cos(math.radians(lat0)),
        lat * METERS_PER_DEGREE,
    )


def planar_length(network: RoadNetwork, a: int, b: int) -> float:
    (lon1, lat1), (lon2, lat2) = network.nodes[a], network.nodes[b]
    lat0 = (lat1 + lat2) / 2
    x1, y1 = project(lon1, lat1, lat0)
    x2, y2 = project(lon2, lat2, lat0)
    return math.hypot(x2 - x1, y2 - y1)


def network_from_edges(
    coords: Mapping[int, tuple[float, float]],
    pairs: Sequence[tuple[int, int]] | Sequence[tuple[int, int, float]],
) -> RoadNetwork:
    """Build a network from (a, b[, length]) tuples; missing lengths come from coordinates."""
    nodes = dict(coords)
    tmp = RoadNetwork(nodes, [])
    edges = []
    for i, p in enumerate(pairs):
        a, b = p[0], p[1]
        length = p[2] if len(p) > 2 else planar_length(tmp, a, b)  # type: ignore[misc]
        edges.append(Edge(i, a, b, float(length)))
    return RoadNetwork(nodes, edges)
