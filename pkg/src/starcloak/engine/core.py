"""The anonymization loop: expiration sweep, star selection, graph update, search, pruning."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from ..cost import CostParams
from ..network import NetworkIndex
from ..queries import ExpirationHeap, Query, QueryQueue, pop_expired
from .graph import CloakingGraph, CloakingNode
from .prune import CloakedSubgraph, PruningPipeline
from .search import (
    DEFAULT_COMB_CAP,
    CandidateStarSet,
    hybrid_step,
    search_star_set,
    search_star_set_bounded,
)
from .select import ActiveStarIndex, CostFn, Unanonymizable, select_star

MODES = ("basic", "bounded", "hybrid")


class PrivacyViolation(AssertionError):
    pass


@dataclass(frozen=True)
class Served:
    time: float
    region: CloakedSubgraph


@dataclass(frozen=True)
class Dropped:
    time: float
    query: Query
    reason: str


def verify_emission(index: NetworkIndex, region: CloakedSubgraph, now: float) -> None:
    """Raise unless every served query's k, l, spatial and temporal bounds hold for ``region``."""
    cand = region.candidate
    cohort = len(cand.queries)
    for q in cand.queries:
        p = q.profile
        if cohort < p.delta_k:
            raise PrivacyViolation(f"{q.query_id}: cohort {cohort} < k {p.delta_k}")
        if len(region.segments) < p.delta_l:
            raise PrivacyViolation(f"{q.query_id}: {len(region.segments)} segments < l {p.delta_l}")
        ball = index.stars_within(cand.query_star[q.query_id], p.sigma_s)
        for s in region.stars:
            if s not in ball:
                raise PrivacyViolation(f"{q.query_id}: star {s} beyond spatial tolerance {p.sigma_s}")
        if now > q.t_exp:
            raise PrivacyViolation(f"{q.query_id}: emitted at {now} after expiry {q.t_exp}")


class StarCloakEngine:
    """Single-writer anonymization engine.

    ``mode`` is ``basic``, ``bounded`` (compactness factor ``lam``) or ``hybrid``
    (bounded search, with basic search for queries within ``alpha`` of expiry).
    """

    def __init__(
        self,
        index: NetworkIndex,
        cost_params: CostParams | None = None,
        mode: str = "basic",
        lam: float = 1,
        alpha: float = 2.0,
        seed: int = 0,
        comb_cap: int = DEFAULT_COMB_CAP,
        neighbor_rule: str = "segments",
        prune_workers: int = 0,
        cost_fn: CostFn | None = None,
        debug: bool = False,
    ) -> None:
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        self.index = index
        self.cost_params = cost_params or CostParams()
        self.mode = mode
        self.lam = lam
        self.alpha = alpha
        self.seed = seed
        self.comb_cap = comb_cap
        self.cost_fn = cost_fn
        self.debug = debug
        self.queue = QueryQueue()
        self.heap = ExpirationHeap()
        self.graph = CloakingGraph(index, neighbor_rule)
        self.active = ActiveStarIndex()
        self.rng = np.random.default_rng([seed, 0x5E1EC7])
        self.pipeline = PruningPipeline(index, seed, prune_workers)
        self.candidates: list[CandidateStarSet] = []
        self._forced: dict[str, int] = {}
        self._drops: list[Dropped] = []
        self._urgent: set[str] = set()  # hybrid: queries past the alpha threshold

    # -- intake ------------------------------------------------------------
    def submit(self, q: Query, star: int | None = None) -> None:
        """Enqueue a located query; ``star`` pins its star assignment (scenario replays)."""
        self.queue.push(q)
        self.heap.push(q)
        if star is not None:
            self._forced[q.query_id] = star

    # -- internals -----------------------------------------------------------
    def _search(self, v: CloakingNode, basic: bool = False) -> CandidateStarSet | None:
        if self._urgent and not basic:
            basic = any(qid in self._urgent for qid in v.queries)
        if basic or self.mode == "basic":
            return search_star_set(self.graph, v, self.comb_cap)
        return search_star_set_bounded(self.graph, v, self.lam, self.comb_cap)

    def _emit(self, cand: CandidateStarSet, now: float) -> None:
        cand = dataclasses.replace(cand, cand_id=len(self.candidates), created=now)
        self.candidates.append(cand)
        for q in cand.queries:
            self.graph.remove_query(q.query_id)
            self.active.detach(q.query_id)
            self.heap.discard(q.query_id)
            self._urgent.discard(q.query_id)
        self.pipeline.submit(cand)

    def _try(self, vid: int, now: float, basic: bool = False) -> None:
        v = self.graph.nodes.get(vid)
        if v is None:
            return
        cand = self._search(v, basic)
        if cand is not None:
            self._emit(cand, now)

    def _drop(self, q: Query, now: float, reason: str) -> None:
        self._drops.append(Dropped(now, q, reason))

    def _sweep(self, now: float) -> None:
        updated: list[int] = []
        for q in pop_expired(self.heap, now):
            self._urgent.discard(q.query_id)
            if q.query_id in self.graph:
                v = self.graph.remove_query(q.query_id)
                self.active.detach(q.query_id)
                if v is not None and v.node_id not in updated:
                    updated.append(v.node_id)
            else:
                self.queue.remove(q.query_id)
                self._forced.pop(q.query_id, None)
            self._drop(q, now, "expired")
        for vid in updated:
            self._try(vid, now)
        if self.mode == "hybrid":
            # each query escalates once; its node then searches in basic mode
            nodes = hybrid_step(self.heap, self.graph, self.alpha, now, self._urgent)
            for q in self.heap.within(now + self.alpha):
                if q.query_id in self.graph.query_map:
                    self._urgent.add(q.query_id)
            for vid in nodes:
                self._try(vid, now, basic=True)

    def _admit(self, q: Query, now: float) -> None:
        forced = self._forced.pop(q.query_id, None)
        try:
            if forced is not None:
                self.active.assign(q.segment_id, forced)
                self.active.attach(q)
                star = forced
            else:
                star = select_star(q, self.active, self.index, self.cost_params, self.rng, self.cost_fn)
        except Unanonymizable:
            self.heap.discard(q.query_id)
            self._drop(q, now, "unanonymizable")
            return
        v = self.graph.add_query(q, star)
        self._try(v.node_id, now)

    # -- public loop -----------------------------------------------------------
    def step(self, now: float) -> list[Served | Dropped]:
        """Run the main loop at virtual time ``now`` until the query queue is empty."""
        self._sweep(now)
        while self.queue:
            self._sweep(now)
            if not self.queue:
                break
            self._admit(self.queue.pop(), now)
            if self.debug:
                self.check_integrity()
        events: list[Served | Dropped] = list(self._drops)
        self._drops.clear()
        for region in self.pipeline.drain():
            verify_emission(self.index, region, region.candidate.created)
            events.append(Served(region.candidate.created, region))
        if self.debug:
            self.check_integrity()
        return events

    def close(self) -> None:
        self.pipeline.close()

    def check_integrity(self) -> None:
        self.graph.check_integrity()
        self.active.check_integrity()
        live = set(self.heap.live_ids())
        pending = {q.query_id for q in self.queue}
        assert live == pending | set(self.graph.query_map), "heap out of step with queue and graph"
        assert not pending & set(self.graph.query_map), "query both queued and housed"
        assert set(self.active.query_segment) == set(self.graph.query_map)


def run_engine(
    engine: StarCloakEngine,
    arrivals: Iterable[Query],
    tick: float = 0.1,
    until: float | None = None,
) -> Iterator[Served | Dropped]:
    """Feed time-ordered queries into ``engine`` tick by tick, yielding every outcome."""
    pending = sorted(arrivals, key=lambda q: q.time)
    i = 0
    step = 0
    last = max((q.t_exp for q in pending), default=0.0)
    horizon = until if until is not None else last + tick
    while True:
        now = round(step * tick, 9)
        if now > horizon:
            break
        while i < len(pending) and pending[i].time <= now:
            engine.submit(pending[i])
            i += 1
        yield from engine.step(now)
        step += 1
