"""Small hand-built networks and independent reference implementations shared by the tests."""

from __future__ import annotations

import heapq
import math
from collections import deque

import numpy as np

from starcloak.network import METERS_PER_DEGREE, Edge, NetworkIndex, RoadNetwork
from starcloak.queries import Query, QueryProfile, query_hash

LAT0 = 37.0


def lonlat(x: float, y: float) -> tuple[float, float]:
    return x / (METERS_PER_DEGREE * math.cos(math.radians(LAT0))), LAT0 + y / METERS_PER_DEGREE


def build(pairs, coords=None, default_length: float = 100.0) -> RoadNetwork:
    """Network from ``(a, b[, length])`` tuples; nodes without coordinates sit on a line."""
    ids = sorted({p[0] for p in pairs} | {p[1] for p in pairs} | set(coords or {}))
    nodes = {}
    for i, n in enumerate(ids):
        xy = (coords or {}).get(n, (i * 10.0, 0.0))
        nodes[n] = lonlat(*xy)
    edges = []
    for i, p in enumerate(pairs):
        length = p[2] if len(p) > 2 else default_length
        edges.append(Edge(i, p[0], p[1], float(length)))
    return RoadNetwork(nodes, edges)


def edge_between(net: RoadNetwork, a: int, b: int) -> int:
    for eid, m in net.adjacency[a]:
        if m == b:
            return eid
    raise KeyError((a, b))


def segment_between(index: NetworkIndex, a: int, b: int) -> int:
    return index.edge_segment[edge_between(index.network, a, b)]


def make_query(
    segment: int,
    user: int = 0,
    time: float = 0.0,
    k: int = 1,
    l: int = 1,
    s: float = 100,
    t: float = 10.0,
    knn: int = 1,
    offset: float = 0.0,
    qid: str | None = None,
) -> Query:
    return Query(
        query_id=qid or query_hash(user, time),
        user_id=user,
        time=time,
        segment_id=segment,
        offset=offset,
        knn_k=knn,
        profile=QueryProfile(k, l, s, t),
    )


# -- hand-built example networks ------------------------------------------------

JUNCTION_EDGES = [
    (1, 2), (2, 3), (3, 4), (2, 6), (4, 5), (4, 9), (9, 10),
    (5, 6), (5, 10), (6, 7), (7, 8), (7, 11), (10, 11), (11, 12),
]
JUNCTION_COORDS = {
    1: (0, 300), 2: (100, 300), 3: (50, 200), 4: (0, 100), 5: (100, 100), 6: (200, 200),
    7: (300, 200), 8: (400, 300), 9: (0, 0), 10: (100, 0), 11: (300, 0), 12: (400, 0),
}


def junction_network() -> RoadNetwork:
    """Twelve-junction network with intersection v5 joined to v4, v6 and v10.

    Every edge is 100 m long; v3 and v9 are degree-2 interior nodes and
    v1, v8, v12 are dead ends.
    """
    return build([(a, b, 100.0) for a, b in JUNCTION_EDGES], JUNCTION_COORDS)


def vicinity_pois(index: NetworkIndex):
    """POIs around segment v5-v6 laid out so a 3-NN query 40 m from v5 sees o5, o6, o7."""
    from starcloak.sim.lbs import Poi, PoiStore

    net = index.network

    def at(a: int, b: int, dist_from_a: float) -> tuple[int, float]:
        eid = edge_between(net, a, b)
        e = net.edges[eid]
        return eid, dist_from_a if e.a == a else e.length - dist_from_a

    layout = {
        1: at(5, 4, 25),
        2: at(1, 2, 50),
        3: at(6, 7, 5),
        4: at(6, 2, 10),
        5: at(5, 6, 70),
        6: at(5, 6, 20),
        7: at(5, 10, 10),
        8: at(11, 12, 50),
    }
    return PoiStore(net, [Poi(oid, eid, off) for oid, (eid, off) in layout.items()])


def pruning_network() -> RoadNetwork:
    """Star layout for the pruning walkthrough.

    Candidate stars 5, 7, 9, 10, 12, 13, 15 (12 hosts the active query);
    1, 2, 3, 4 lie outside and only touch 5, 7, 9 and 13 respectively.
    Star 9 reaches star 3 over two parallel chains.
    """
    pairs = [
        (5, 1), (5, 10), (5, 7),
        (7, 2), (7, 12),
        (9, 101), (101, 3), (9, 102), (102, 3), (9, 15),
        (13, 4), (13, 10), (13, 12),
        (10, 15), (15, 12),
        # dead-end spurs so the outer stars are intersections too
        (1, 201), (1, 202), (2, 203), (2, 204), (3, 205), (4, 206), (4, 207),
    ]
    return build(pairs)


WALKTHROUGH_ASSIGNMENT = [4, 12, 6, 8, 13, 9, 11, 5, 8]  # star of q1 .. q9


def walkthrough_network() -> RoadNetwork:
    """Stars 1-12 on a 3 x 4 grid with star 13 hanging below 12; every star has a dead-end spur."""
    pairs = []
    for r in range(3):
        for c in range(4):
            n = r * 4 + c + 1
            if c < 3:
                pairs.append((n, n + 1))
            if r < 2:
                pairs.append((n, n + 4))
    pairs.append((12, 13))
    pairs += [(n, 100 + n) for n in range(1, 14)]
    coords = {r * 4 + c + 1: (c * 100.0, -r * 100.0) for r in range(3) for c in range(4)}
    coords[13] = (300.0, -300.0)
    for n in range(1, 14):
        x, y = coords[n]
        coords[100 + n] = (x + 30.0, y + 30.0)
    return build(pairs, coords)


def spur_segment(index: NetworkIndex, star: int) -> int:
    """The dead-end segment hanging off ``star`` in the walkthrough grid."""
    return segment_between(index, star, 100 + star)


# -- random instances --------------------------------------------------------------


def random_network(rng: np.random.Generator, n: int, p_extra: float = 0.15) -> RoadNetwork:
    """Connected random graph: a random tree plus extra chords, integer lengths."""
    pairs = []
    seen = set()
    for v in range(1, n):
        u = int(rng.integers(v))
        pairs.append((u, v))
        seen.add((u, v))
    for a in range(n):
        for b in range(a + 1, n):
            if (a, b) not in seen and rng.random() < p_extra / max(1, n / 10):
                pairs.append((a, b))
                seen.add((a, b))
    coords = {v: (float(rng.uniform(0, 1000)), float(rng.uniform(0, 1000))) for v in range(n)}
    return build([(a, b, float(rng.integers(1, 200))) for a, b in pairs], coords)


# -- reference implementations ---------------------------------------------------


def oracle_segments(net: RoadNetwork) -> set[frozenset[int]]:
    """Maximal degree-2 chains found by growing each edge in both directions."""
    out = set()
    for eid in net.edges:
        chain = {eid}
        for end in (net.edges[eid].a, net.edges[eid].b):
            node, prev = end, eid
            while net.degree(node) == 2:
                nxt = [e for e, _ in net.adjacency[node] if e != prev]
                if not nxt or nxt[0] in chain:
                    break
                prev = nxt[0]
                chain.add(prev)
                node = net.edges[prev].other(node)
        out.add(frozenset(chain))
    return out


def oracle_border_nodes(net: RoadNetwork, edge_ids) -> set[int]:
    es = set(edge_ids)
    vs = {net.edges[e].a for e in es} | {net.edges[e].b for e in es}
    out = set()
    for v in vs:
        d_s = sum(1 for e in es if v in (net.edges[e].a, net.edges[e].b))
        if net.degree(v) > d_s:
            out.add(v)
    return out


def bfs_hops(adjacency, source) -> dict:
    dist = {source: 0}
    q = deque([source])
    while q:
        u = q.popleft()
        for w in adjacency[u]:
            if w not in dist:
                dist[w] = dist[u] + 1
                q.append(w)
    return dist


def point_distances(net: RoadNetwork, eid: int, off: float) -> dict[int, float]:
    """Plain Dijkstra from a point ``off`` metres along edge ``eid`` (from its ``a`` end)."""
    e = net.edges[eid]
    dist: dict[int, float] = {}
    heap = sorted([(off, e.a), (e.length - off, e.b)])
    while heap:
        d, n = heapq.heappop(heap)
        if n in dist:
            continue
        dist[n] = d
        for f, m in net.adjacency[n]:
            if m not in dist:
                heapq.heappush(heap, (d + net.edges[f].length, m))
    return dist


def brute_knn(store, eid: int, off: float, k: int, poi_class=None) -> tuple[int, ...]:
    """k nearest POIs by scanning every object against full point-to-node distances."""
    net = store.network
    dist = point_distances(net, eid, off)
    scored = []
    for p in store.objects.values():
        if poi_class is not None and p.class_id != poi_class:
            continue
        e = net.edges[p.edge_id]
        d = min(dist.get(e.a, math.inf) + p.offset, dist.get(e.b, math.inf) + e.length - p.offset)
        if p.edge_id == eid:
            d = min(d, abs(p.offset - off))
        scored.append((d, p.object_id))
    scored.sort()
    return tuple(oid for _, oid in scored[:k])
