"""Candidate star-set search over the cloaking graph, basic and spatially bounded."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Collection, Sequence

from ..queries import ExpirationHeap, Query
from .graph import CloakingGraph, CloakingNode

DEFAULT_COMB_CAP = 256


@dataclass(frozen=True)
class CandidateStarSet:
    """Immutable snapshot handed to the pruning stage."""

    stars: frozenset[int]
    node_ids: tuple[int, ...]
    queries: tuple[Query, ...]
    l_max: int
    k_max: int
    fixed: frozenset[int]
    query_star: dict[str, int] = field(default_factory=dict, compare=False)
    cand_id: int = -1
    created: float = 0.0


def check_reqs(graph: CloakingGraph, ns: Sequence[CloakingNode]) -> CandidateStarSet | None:
    """Return the shared star set of ``ns`` if together they meet every member's k and l, else None."""
    total = sum(len(v.queries) for v in ns)
    k_max = max(v.delta_k for v in ns)
    if total < k_max:
        return None
    shared = reduce(lambda acc, v: acc & v.theta, ns[1:], ns[0].theta)
    l_max = max(v.delta_l for v in ns)
    if graph.index.segment_count(shared) < l_max:
        return None
    queries = tuple(q for v in ns for q in v.queries.values())
    return CandidateStarSet(
        stars=shared,
        node_ids=tuple(v.node_id for v in ns),
        queries=queries,
        l_max=l_max,
        k_max=k_max,
        fixed=frozenset(v.star for v in ns),
        query_star={q.query_id: v.star for v in ns for q in v.queries.values()},
    )


def _ordered_neighbors(graph: CloakingGraph, v_u: CloakingNode) -> list[tuple[int, CloakingNode]]:
    hops = graph.index.hops_from(v_u.star)
    out = []
    for uid in v_u.neighbors:
        u = graph.nodes[uid]
        out.append((hops.get(u.star, 1 << 30), u))
    out.sort(key=lambda t: (t[0], t[1].node_id))
    return out


def _search(
    graph: CloakingGraph,
    v_u: CloakingNode,
    lam: float | None,
    cap: int,
) -> CandidateStarSet | None:
    found = check_reqs(graph, [v_u])
    if found is not None:
        return found

    neighbors = _ordered_neighbors(graph, v_u)
    if not neighbors:
        return None
    if lam is None:
        levels = {0: [u for _, u in neighbors]}
        reach = None
    else:
        levels: dict[int, list[CloakingNode]] = {}
        for d, u in neighbors:
            levels.setdefault(int(d // lam), []).append(u)
        reach = 2 * lam - 1

    hops = graph.index.hops_from

    def close_enough(u: CloakingNode, combo: tuple[CloakingNode, ...]) -> bool:
        if reach is None:
            return True
        table = hops(u.star)
        return any(table.get(m.star, 1 << 30) <= reach for m in (v_u, *combo))

    # a combination is a tuple of nodes joined to v_u; () stands for v_u alone
    frontier: list[tuple[CloakingNode, ...]] = [()]
    for level in range(0, max(levels) + 1):
        members = levels.get(level, [])
        if level > 0 and not members:
            return None
        generated: list[tuple[CloakingNode, ...]] = []
        for u in members:
            pool = frontier + generated
            fresh = []
            for combo in pool:
                if not all(c.node_id in u.neighbors for c in combo):
                    continue
                if not close_enough(u, combo):
                    continue
                ns = [v_u, *combo, u]
                found = check_reqs(graph, ns)
                if found is not None:
                    return found
                fresh.append((*combo, u))
            generated.extend(fresh)
            if len(generated) > cap:
                del generated[: len(generated) - cap]
        frontier = ([()] if level == 0 else []) + generated
    return None


def search_star_set(graph: CloakingGraph, v_u: CloakingNode, cap: int = DEFAULT_COMB_CAP) -> CandidateStarSet | None:
    """Try ``v_u`` alone, then with neighbours nearest-first and with earlier neighbour cliques."""
    return _search(graph, v_u, None, cap)


def search_star_set_bounded(
    graph: CloakingGraph,
    v_u: CloakingNode,
    lam: float,
    cap: int = DEFAULT_COMB_CAP,
) -> CandidateStarSet | None:
    """Level-by-level search: neighbours at hop distance d sit on level ``d // lam``.

    A node on level i only extends combinations produced on level i - 1 (or
    earlier on its own level), and only if it lies within ``2 * lam - 1`` hops of
    a star already in the combination.  An empty level ends the search.
    """
    if lam < 1:
        raise ValueError("compactness factor must be >= 1")
    return _search(graph, v_u, lam, cap)


def hybrid_step(
    heap: ExpirationHeap,
    graph: CloakingGraph,
    alpha: float,
    now: float,
    exclude: Collection[str] = (),
) -> list[int]:
    """Nodes holding a query that expires within ``alpha`` of ``now``.

    Queries listed in ``exclude`` (already escalated) do not count.
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    out: list[int] = []
    for q in heap.within(now + alpha):
        if q.query_id in exclude:
            continue
        vid = graph.query_map.get(q.query_id)
        if vid is not None and vid not in out:
            out.append(vid)
    return out


def compactness_ok(index, fixed_stars, lam: float) -> bool:
    """Every fixed star has another fixed star within ``2 * lam - 1`` hops."""
    stars = sorted(set(fixed_stars))
    if len(stars) < 2:
        return True
    reach = 2 * lam - 1
    for s in stars:
        table = index.hops_from(s)
        if not any(t != s and table.get(t, 1 << 30) <= reach for t in stars):
            return False
    return True
