"""Cost-aware randomized star selection and the active-star index."""

from __future__ import annotations

from typing import Callable

from ..cost import CostParams, star_cost
from ..network import NetworkIndex
from ..queries import Query


class Unanonymizable(Exception):
    """The query's segment has no intersection terminal to anchor a star."""


class ActiveStarIndex:
    """Which stars are active and which star each active segment is assigned to."""

    def __init__(self) -> None:
        self.active: set[int] = set()
        self.assignment: dict[int, int] = {}
        self.star_segments: dict[int, set[int]] = {}
        self.live: dict[int, int] = {}
        self.query_segment: dict[str, int] = {}

    def assign(self, segment: int, star: int) -> None:
        self.active.add(star)
        self.assignment[segment] = star
        self.star_segments.setdefault(star, set()).add(segment)

    def attach(self, q: Query) -> None:
        self.query_segment[q.query_id] = q.segment_id
        self.live[q.segment_id] = self.live.get(q.segment_id, 0) + 1

    def detach(self, query_id: str) -> None:
        seg = self.query_segment.pop(query_id, None)
        if seg is None:
            return
        self.live[seg] -= 1
        if self.live[seg]:
            return
        del self.live[seg]
        star = self.assignment.get(seg)
        if star is None:
            return
        segs = self.star_segments[star]
        if any(self.live.get(s, 0) for s in segs):
            return
        # last live segment of this star went quiet: star leaves the index
        for s in segs:
            del self.assignment[s]
        del self.star_segments[star]
        self.active.discard(star)

    def check_integrity(self) -> None:
        for seg, star in self.assignment.items():
            assert star in self.active
            assert seg in self.star_segments[star]
        for star in self.active:
            segs = self.star_segments.get(star, set())
            assert any(self.live.get(s, 0) > 0 for s in segs), f"active star {star} has no live query"
        for qid, seg in self.query_segment.items():
            assert seg in self.assignment, f"query {qid} sits on an unassigned segment"


CostFn = Callable[[Query, int], float]


def select_star(
    q: Query,
    active: ActiveStarIndex,
    index: NetworkIndex,
    cost_params: CostParams,
    rng,
    cost_fn: CostFn | None = None,
) -> int:
    """Pick the star for ``q``'s segment, record the assignment and count ``q`` as live."""
    seg = q.segment_id
    if cost_fn is None:
        def cost_fn(query: Query, star: int) -> float:
            return star_cost(cost_params, index, star, query.knn_k)

    if seg in active.assignment:
        star = active.assignment[seg]
    else:
        ends = index.segment_stars(seg)
        if not ends:
            raise Unanonymizable(f"segment {seg} has no intersection terminal")
        if len(ends) == 1:
            star = ends[0]
        else:
            a, b = ends
            a_on, b_on = a in active.active, b in active.active
            if a_on != b_on:
                star = a if a_on else b
            else:
                ca, cb = cost_fn(q, a), cost_fn(q, b)
                p_a = 0.5 if ca + cb == 0 else cb / (ca + cb)
                star = a if rng.random() < p_a else b
        active.assign(seg, star)
    active.attach(q)
    return star
