"""Randomized pruning of candidate star sets into cloaked subgraphs."""

from __future__ import annotations

import queue
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..network import NetworkIndex
from .search import CandidateStarSet

Picker = Callable[[Sequence[int]], int]


@dataclass(frozen=True)
class CloakedSubgraph:
    cand_id: int
    stars: frozenset[int]
    segments: frozenset[int]
    border_nodes: frozenset[int]
    candidate: CandidateStarSet
    trace: tuple[tuple[str, int, int], ...] = field(default=(), compare=False)

    @property
    def query_ids(self) -> tuple[str, ...]:
        return tuple(q.query_id for q in self.candidate.queries)


def boundary_stars(index: NetworkIndex, stars: set[int] | frozenset[int], fixed: frozenset[int]) -> list[int]:
    """Non-fixed stars of ``stars`` with at least one star-graph neighbour outside the set."""
    adj = index.star_graph.adjacency
    return sorted(s for s in stars if s not in fixed and any(t not in stars for t in adj[s]))


def prune(
    cand: CandidateStarSet,
    index: NetworkIndex,
    rng: np.random.Generator | None = None,
    pick: Picker | None = None,
) -> CloakedSubgraph:
    """Peel random boundary stars off ``cand`` while at least ``l_max`` segments remain.

    ``pick`` (tests only) chooses the next star from the sorted boundary list
    instead of ``rng``.  The trace records ``(action, star, segments_after)``.
    """
    theta = set(cand.stars)
    fixed = cand.fixed
    adj = index.star_graph.adjacency
    bs = boundary_stars(index, theta, fixed)
    trace: list[tuple[str, int, int]] = []
    while bs:
        r = pick(bs) if pick is not None else bs[int(rng.integers(len(bs)))]
        theta.discard(r)
        remaining = index.segment_count(theta)
        if remaining >= cand.l_max:
            bs.remove(r)
            for t in adj[r]:
                if t in theta and t not in fixed and t not in bs:
                    bs.append(t)
            bs.sort()
            trace.append(("remove", r, remaining))
        else:
            theta.add(r)
            trace.append(("restore", r, remaining))
            break
    frozen = frozenset(theta)
    segments = frozenset(index.star_graph.segments_of(frozen))
    return CloakedSubgraph(
        cand_id=cand.cand_id,
        stars=frozen,
        segments=segments,
        border_nodes=frozenset(index.border_nodes(segments)),
        candidate=cand,
        trace=tuple(trace),
    )


def candidate_rng(run_seed: int, cand_id: int) -> np.random.Generator:
    """Independent stream per candidate so worker scheduling cannot change outcomes."""
    return np.random.default_rng([run_seed, cand_id])


class PruningPipeline:
    """Candidate star-set queue drained by zero (inline) or more pruning threads."""

    def __init__(self, index: NetworkIndex, run_seed: int, workers: int = 0) -> None:
        self.index = index
        self.run_seed = run_seed
        self.workers = workers
        self._pending: list[CandidateStarSet] = []
        self._results: list[CloakedSubgraph] = []
        self._inbox: queue.Queue | None = None
        self._outbox: queue.Queue | None = None
        self._threads: list[threading.Thread] = []
        self._submitted = 0

    def _work(self) -> None:
        assert self._inbox is not None and self._outbox is not None
        while True:
            cand = self._inbox.get()
            if cand is None:
                self._inbox.task_done()
                return
            try:
                self._outbox.put(prune(cand, self.index, candidate_rng(self.run_seed, cand.cand_id)))
            except BaseException as exc:  # surfaced on drain
                self._outbox.put(exc)
            finally:
                self._inbox.task_done()

    def _start(self) -> None:
        self._inbox, self._outbox = queue.Queue(), queue.Queue()
        for _ in range(self.workers):
            t = threading.Thread(target=self._work, daemon=True)
            t.start()
            self._threads.append(t)

    def submit(self, cand: CandidateStarSet) -> None:
        if self.workers <= 0:
            self._pending.append(cand)
            return
        if not self._threads:
            self._start()
        self._submitted += 1
        self._inbox.put(cand)

    def drain(self) -> list[CloakedSubgraph]:
        """Block until every submitted candidate is pruned; results come back in candidate order."""
        if self.workers <= 0:
            out = [prune(c, self.index, candidate_rng(self.run_seed, c.cand_id)) for c in self._pending]
            self._pending.clear()
            return out
        if not self._threads:
            return []
        self._inbox.join()
        out = []
        while self._submitted:
            item = self._outbox.get()
            self._submitted -= 1
            if isinstance(item, BaseException):
                raise item
            out.append(item)
        out.sort(key=lambda s: s.cand_id)
        return out

    def close(self) -> None:
        if self._threads:
            for _ in self._threads:
                self._inbox.put(None)
            for t in self._threads:
                t.join()
            self._threads.clear()
