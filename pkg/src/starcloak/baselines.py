"""Comparison anonymizers: random segment sampling and deterministic network expansion."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .engine.prune import CloakedSubgraph
from .engine.search import CandidateStarSet
from .network import NetworkIndex
from .queries import Query

ALGORITHMS = ("random-sampling", "network-expansion")


@dataclass(frozen=True)
class BaselineConfig:
    algorithm: str
    seed: int = 0

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown baseline {self.algorithm!r}")


def anchor_star(index: NetworkIndex, segment_id: int) -> int | None:
    """Lower-id intersection terminal of a segment, None when it has none."""
    ends = index.segment_stars(segment_id)
    return min(ends) if ends else None


class _UserTally:
    """Distinct users with live queries on the segments added so far."""

    def __init__(self, active: Iterable[Query]) -> None:
        self.by_segment: dict[int, set[int]] = {}
        for a in active:
            self.by_segment.setdefault(a.segment_id, set()).add(a.user_id)
        self.users: set[int] = set()

    def add(self, segment_id: int) -> None:
        self.users |= self.by_segment.get(segment_id, set())


def _region(index: NetworkIndex, q: Query, segments: Iterable[int], anchor: int) -> CloakedSubgraph:
    segs = frozenset(segments)
    cand = CandidateStarSet(
        stars=frozenset(),
        node_ids=(),
        queries=(q,),
        l_max=q.profile.delta_l,
        k_max=q.profile.delta_k,
        fixed=frozenset(),
        query_star={q.query_id: anchor},
    )
    return CloakedSubgraph(
        cand_id=-1,
        stars=frozenset(),
        segments=segs,
        border_nodes=frozenset(index.border_nodes(segs)),
        candidate=cand,
    )


def verify_baseline(index: NetworkIndex, region: CloakedSubgraph, active: Iterable[Query]) -> None:
    """Assert cohort, segment-count and spatial-tolerance bounds for a baseline region."""
    (q,) = region.candidate.queries
    p = q.profile
    users = {a.user_id for a in active if a.segment_id in region.segments} | {q.user_id}
    assert len(users) >= p.delta_k, f"{q.query_id}: {len(users)} users < k {p.delta_k}"
    assert len(region.segments) >= p.delta_l, f"{q.query_id}: too few segments"
    ball = index.ball_segments(region.candidate.query_star[q.query_id], p.sigma_s)
    assert region.segments <= ball, f"{q.query_id}: region leaves the spatial tolerance"
    assert q.segment_id in region.segments


def random_sampling_cloak(
    q: Query,
    index: NetworkIndex,
    active: Sequence[Query],
    rng: np.random.Generator,
) -> CloakedSubgraph | None:
    """Grow a region from q's own segment by uniform sampling inside the spatial ball."""
    anchor = anchor_star(index, q.segment_id)
    if anchor is None:
        return None
    p = q.profile
    pool = sorted(index.ball_segments(anchor, p.sigma_s) - {q.segment_id})
    order = rng.permutation(len(pool))
    tally = _UserTally(active)
    tally.users.add(q.user_id)
    tally.add(q.segment_id)
    region = [q.segment_id]
    for i in order:
        if len(region) >= p.delta_l and len(tally.users) >= p.delta_k:
            break
        region.append(pool[i])
        tally.add(pool[i])
    if len(region) < p.delta_l or len(tally.users) < p.delta_k:
        return None
    return _region(index, q, region, anchor)


def _midpoint_distance(index: NetworkIndex, dist: dict[int, float], segment_id: int) -> float:
    seg = index.segments[segment_id]
    a, b = seg.terminals
    return min(dist.get(a, math.inf), dist.get(b, math.inf)) + seg.length / 2


def expansion_order(
    index: NetworkIndex,
    segment_id: int,
    offset: float,
    allowed: frozenset[int] | set[int],
) -> Iterable[int]:
    """Yield segments of ``allowed`` in greedy nearest-midpoint order from a point.

    The first item is the point's own segment.  Each later item is the
    frontier segment (adjacent to what was already yielded) whose midpoint is
    nearest by network distance, ties broken by segment id.
    """
    dist = index.position_distances(segment_id, offset)
    seen = {segment_id}
    heap: list[tuple[float, int]] = []
    current = segment_id
    while True:
        yield current
        for t in index.segment_neighbors(current):
            if t in allowed and t not in seen:
                seen.add(t)
                heapq.heappush(heap, (_midpoint_distance(index, dist, t), t))
        if not heap:
            return
        current = heapq.heappop(heap)[1]


def network_expansion_cloak(
    q: Query,
    index: NetworkIndex,
    active: Sequence[Query],
) -> CloakedSubgraph | None:
    """Deterministic expansion by nearest neighbouring segment midpoint."""
    anchor = anchor_star(index, q.segment_id)
    if anchor is None:
        return None
    p = q.profile
    allowed = index.ball_segments(anchor, p.sigma_s)
    tally = _UserTally(active)
    tally.users.add(q.user_id)
    region = []
    for s in expansion_order(index, q.segment_id, q.offset, allowed | {q.segment_id}):
        region.append(s)
        tally.add(s)
        if len(region) >= p.delta_l and len(tally.users) >= p.delta_k:
            return _region(index, q, region, anchor)
    return None


# -- size-matched replays used by the attack suite -----------------------------


def sampling_replay(
    index: NetworkIndex,
    segment_id: int,
    size: int,
    sigma_s: float,
    rng: np.random.Generator,
) -> frozenset[int] | None:
    """Random-sampling output of ``size`` segments for a user hypothesised on ``segment_id``."""
    anchor = anchor_star(index, segment_id)
    if anchor is None:
        return None
    pool = sorted(index.ball_segments(anchor, sigma_s) - {segment_id})
    take = max(0, min(size - 1, len(pool)))
    picks = rng.choice(len(pool), size=take, replace=False) if take else []
    return frozenset([segment_id, *(pool[i] for i in picks)])


def expansion_replay(index: NetworkIndex, segment_id: int, size: int, sigma_s: float) -> frozenset[int] | None:
    """Network-expansion output of ``size`` segments from the midpoint of ``segment_id``."""
    anchor = anchor_star(index, segment_id)
    if anchor is None:
        return None
    allowed = index.ball_segments(anchor, sigma_s) | {segment_id}
    out = []
    mid = index.segments[segment_id].length / 2
    for s in expansion_order(index, segment_id, mid, allowed):
        out.append(s)
        if len(out) >= size:
            break
    return frozenset(out)
