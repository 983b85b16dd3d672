"""Cloaking graph: per-star groups of co-cloakable queries and their neighbour links."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..network import NetworkIndex
from ..queries import Query


def combine_requirements(queries) -> tuple[int, int, float]:
    """Strictest combination over a query group: max k, max l, min spatial tolerance."""
    qs = list(queries)
    return (
        max(q.profile.delta_k for q in qs),
        max(q.profile.delta_l for q in qs),
        min(q.profile.sigma_s for q in qs),
    )


@dataclass(eq=False)
class CloakingNode:
    node_id: int
    star: int
    queries: dict[str, Query]
    delta_k: int = 1
    delta_l: int = 1
    sigma_s: float = 0
    theta: frozenset[int] = frozenset()
    sc: int = 0
    neighbors: set[int] = field(default_factory=set)

    def __repr__(self) -> str:
        return (
            f"CloakingNode(id={self.node_id}, star={self.star}, |Q|={len(self.queries)}, "
            f"k={self.delta_k}, l={self.delta_l}, s={self.sigma_s}, sc={self.sc})"
        )


class CloakingGraph:
    """Nodes grouped by star (star map) with a query map for O(1) lookup.

    ``neighbor_rule`` picks how the shared coverage of two nodes is measured
    against their segment requirement: ``"segments"`` counts the segments
    of the shared star set, ``"stars"`` counts the shared stars themselves.
    """

    def __init__(self, index: NetworkIndex, neighbor_rule: str = "segments") -> None:
        if neighbor_rule not in ("segments", "stars"):
            raise ValueError(f"unknown neighbor rule {neighbor_rule!r}")
        self.index = index
        self.neighbor_rule = neighbor_rule
        self.nodes: dict[int, CloakingNode] = {}
        self.star_map: dict[int, list[int]] = {}
        self.query_map: dict[str, int] = {}
        self._next_id = 0

    def __contains__(self, query_id: str) -> bool:
        return query_id in self.query_map

    def node_of(self, query_id: str) -> CloakingNode:
        return self.nodes[self.query_map[query_id]]

    # -- derived quantities --------------------------------------------------
    def shared_measure(self, a: CloakingNode, b: CloakingNode) -> int:
        shared = a.theta & b.theta
        if self.neighbor_rule == "stars":
            return len(shared)
        return self.index.segment_count(shared)

    def are_neighbors(self, a: CloakingNode, b: CloakingNode) -> bool:
        return (
            a.star in b.theta
            and b.star in a.theta
            and self.shared_measure(a, b) >= max(a.delta_l, b.delta_l)
        )

    def _refresh_coverage(self, v: CloakingNode) -> None:
        v.theta = self.index.stars_within(v.star, v.sigma_s)
        v.sc = self.index.segment_count(v.theta)

    def _refresh_neighbors(self, v: CloakingNode) -> None:
        for u in v.neighbors:
            self.nodes[u].neighbors.discard(v.node_id)
        v.neighbors = set()
        for star in v.theta:
            for uid in self.star_map.get(star, ()):
                if uid == v.node_id:
                    continue
                u = self.nodes[uid]
                if self.are_neighbors(u, v):
                    v.neighbors.add(uid)
                    u.neighbors.add(v.node_id)

    def _recombine(self, v: CloakingNode) -> tuple[bool, bool, bool]:
        k, l, s = combine_requirements(v.queries.values())
        changed = (k != v.delta_k, l != v.delta_l, s != v.sigma_s)
        v.delta_k, v.delta_l, v.sigma_s = k, l, s
        return changed

    # -- updates ---------------------------------------------------------------
    def add_query(self, q: Query, star: int) -> CloakingNode:
        """Place ``q`` in the first compatible node of ``star`` or open a new node."""
        target = None
        for vid in self.star_map.get(star, ()):
            v = self.nodes[vid]
            if q.profile.sigma_s < v.sigma_s:
                sc = self.index.segment_count(self.index.stars_within(star, q.profile.sigma_s))
                if sc >= max(q.profile.delta_l, v.delta_l):
                    target = v
                    break
            elif v.sc >= q.profile.delta_l:
                target = v
                break

        if target is None:
            target = CloakingNode(self._next_id, star, {q.query_id: q})
            self._next_id += 1
            self.nodes[target.node_id] = target
            self.star_map.setdefault(star, []).append(target.node_id)
            self.query_map[q.query_id] = target.node_id
            self._recombine(target)
            self._refresh_coverage(target)
            self._refresh_neighbors(target)
            return target

        target.queries[q.query_id] = q
        self.query_map[q.query_id] = target.node_id
        _, l_changed, s_changed = self._recombine(target)
        if s_changed:
            self._refresh_coverage(target)
        if l_changed or s_changed:
            self._refresh_neighbors(target)
        return target

    def remove_query(self, query_id: str) -> CloakingNode | None:
        """Detach a query; returns the surviving node or ``None`` when the node dissolved."""
        vid = self.query_map.pop(query_id)
        v = self.nodes[vid]
        if len(v.queries) > 1:
            del v.queries[query_id]
            _, l_changed, s_changed = self._recombine(v)
            # removal can only relax l (down) or s (up)
            if l_changed or s_changed:
                if s_changed:
                    self._refresh_coverage(v)
                self._refresh_neighbors(v)
            return v
        del v.queries[query_id]
        for u in v.neighbors:
            self.nodes[u].neighbors.discard(vid)
        del self.nodes[vid]
        ids = self.star_map[v.star]
        ids.remove(vid)
        if not ids:
            del self.star_map[v.star]
        return None

    # -- debugging ---------------------------------------------------------------
    def check_integrity(self) -> None:
        seen_queries = set()
        for vid, v in self.nodes.items():
            assert v.queries, f"empty node {vid}"
            assert vid in self.star_map.get(v.star, ()), f"node {vid} missing from star map"
            assert (v.delta_k, v.delta_l, v.sigma_s) == combine_requirements(v.queries.values())
            assert v.theta == self.index.stars_within(v.star, v.sigma_s)
            assert v.sc == self.index.segment_count(v.theta)
            for qid in v.queries:
                assert self.query_map.get(qid) == vid, f"query map disagrees for {qid}"
                seen_queries.add(qid)
            for uid in v.neighbors:
                assert vid in self.nodes[uid].neighbors, "asymmetric neighbour link"
        assert seen_queries == set(self.query_map), "query map holds stale entries"
        for star, ids in self.star_map.items():
            assert ids, f"empty star-map bucket {star}"
            for vid in ids:
                assert self.nodes[vid].star == star
        for v in self.nodes.values():
            expected = {
                u.node_id for u in self.nodes.values() if u is not v and self.are_neighbors(u, v)
            }
            assert v.neighbors == expected, f"neighbour set of node {v.node_id} is stale"
