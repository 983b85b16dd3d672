"""Mock location-based service: k-NN over cloaked subgraphs and client-side filtering."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

from ..network import NetworkIndex, RoadNetwork
from ..queries import Query


@dataclass(frozen=True)
class Poi:
    object_id: int
    edge_id: int
    offset: float  # from the edge's ``a`` end
    class_id: int = 0


class PoiStore:
    def __init__(self, network: RoadNetwork, pois: Iterable[Poi]) -> None:
        self.network = network
        self.objects: dict[int, Poi] = {}
        self.by_edge: dict[int, list[Poi]] = {}
        for p in pois:
            if p.edge_id not in network.edges:
                raise ValueError(f"POI {p.object_id} on unknown edge {p.edge_id}")
            if not 0 <= p.offset <= network.edges[p.edge_id].length:
                raise ValueError(f"POI {p.object_id} offset outside its edge")
            self.objects[p.object_id] = p
            self.by_edge.setdefault(p.edge_id, []).append(p)
        for lst in self.by_edge.values():
            lst.sort(key=lambda p: p.object_id)

    def __len__(self) -> int:
        return len(self.objects)

    def edge_counts(self) -> dict[int, int]:
        return {e: len(v) for e, v in self.by_edge.items()}


def _matches(q: Query, p: Poi) -> bool:
    return q.poi_class is None or p.class_id == q.poi_class


def query_position(q: Query, index: NetworkIndex) -> tuple[int, float]:
    if q.edge_id >= 0:
        return q.edge_id, q.edge_offset
    return index.segment_point(q.segment_id, q.offset)


def nearest_objects(
    store: PoiStore,
    sources: Mapping[int, float],
    k: int,
    accept: Callable[[Poi], bool],
    start: tuple[int, float] | None = None,
) -> list[tuple[float, int]]:
    """The ``k`` nearest accepted POIs as (distance, object_id), ties by object id.

    ``sources`` seeds node distances; ``start`` adds direct along-edge
    distances for POIs sharing the source point's edge.
    """
    net = store.network
    best: dict[int, float] = {}

    def offer(p: Poi, d: float) -> None:
        if accept(p) and d < best.get(p.object_id, math.inf):
            best[p.object_id] = d

    if start is not None:
        eid, off = start
        for p in store.by_edge.get(eid, ()):
            offer(p, abs(p.offset - off))

    def kth() -> float:
        if len(best) < k:
            return math.inf
        return sorted(best.values())[k - 1]

    heap = [(d, n) for n, d in sources.items()]
    heapq.heapify(heap)
    done: set[int] = set()
    while heap:
        d, n = heapq.heappop(heap)
        if n in done:
            continue
        if d > kth():
            break
        done.add(n)
        for eid, m in net.adjacency[n]:
            e = net.edges[eid]
            for p in store.by_edge.get(eid, ()):
                offer(p, d + (p.offset if n == e.a else e.length - p.offset))
            if m not in done:
                heapq.heappush(heap, (d + e.length, m))
    ranked = sorted((d, oid) for oid, d in best.items())
    return ranked[:k]


def edge_result(q: Query, store: PoiStore, edge_id: int) -> frozenset[int]:
    return frozenset(p.object_id for p in store.by_edge.get(edge_id, ()) if _matches(q, p))


def segment_result(q: Query, store: PoiStore, index: NetworkIndex, segment_id: int) -> frozenset[int]:
    out: set[int] = set()
    for eid in index.segments[segment_id].edges:
        out |= edge_result(q, store, eid)
    return frozenset(out)


def node_result(q: Query, store: PoiStore, node: int) -> frozenset[int]:
    """The query's k nearest matching POIs from ``node`` by network distance."""
    hits = nearest_objects(store, {node: 0.0}, q.knn_k, lambda p: _matches(q, p))
    return frozenset(oid for _, oid in hits)


def candidate_result(
    q: Query,
    store: PoiStore,
    index: NetworkIndex,
    segments: Iterable[int],
    border_nodes: Iterable[int],
) -> frozenset[int]:
    """Segment results over the region plus vicinity results at each border node."""
    out: set[int] = set()
    for s in segments:
        out |= segment_result(q, store, index, s)
    for v in border_nodes:
        out |= node_result(q, store, v)
    return frozenset(out)


def _from_query(q: Query, store: PoiStore, index: NetworkIndex, accept: Callable[[Poi], bool]):
    eid, off = query_position(q, index)
    e = store.network.edges[eid]
    sources = {e.a: off}
    sources[e.b] = min(sources.get(e.b, math.inf), e.length - off)
    return nearest_objects(store, sources, q.knn_k, accept, start=(eid, off))


def exact_knn(q: Query, store: PoiStore, index: NetworkIndex) -> tuple[int, ...]:
    """Brute-force answer at the true location, nearest first."""
    return tuple(oid for _, oid in _from_query(q, store, index, lambda p: _matches(q, p)))


def filter_result(q: Query, store: PoiStore, index: NetworkIndex, candidate: Iterable[int]) -> tuple[int, ...]:
    """Client-side false-positive filter: the k candidates nearest the true location."""
    keep = frozenset(candidate)
    return tuple(oid for _, oid in _from_query(q, store, index, lambda p: p.object_id in keep and _matches(q, p)))


def read_pois(path, index: NetworkIndex, quantum: float = 1 / 16) -> PoiStore:
    """Read ``object_id longitude latitude class_id`` lines and snap each POI to its nearest edge."""
    from ..network import ParseError
    from ..spatial import GridIndex

    grid = GridIndex(index)
    pois = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ParseError(str(path), lineno, f"expected 4 fields, got {len(parts)}")
            try:
                oid, lon, lat, cls = int(parts[0]), float(parts[1]), float(parts[2]), int(parts[3])
            except ValueError as exc:
                raise ParseError(str(path), lineno, str(exc)) from None
            eid, _, t = grid.nearest_edge(*grid.to_xy(lon, lat))
            length = index.network.edges[eid].length
            off = min(length, round(t * length / quantum) * quantum)
            pois.append(Poi(oid, eid, off, cls))
    return PoiStore(index.network, pois)


def write_pois(path, store: PoiStore, index: NetworkIndex) -> None:
    from ..spatial import GridIndex, lonlat_on_edge

    grid = GridIndex(index)
    with open(path, "w", encoding="utf-8") as fh:
        for oid in sorted(store.objects):
            p = store.objects[oid]
            lon, lat = lonlat_on_edge(grid, p.edge_id, p.offset)
            fh.write(f"{p.object_id} {lon:.7f} {lat:.7f} {p.class_id}\n")
