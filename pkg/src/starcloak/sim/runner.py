"""One simulation run: moving objects issue queries, an anonymizer cloaks them, the LBS answers."""

from __future__ import annotations

import dataclasses
import json
import time as wallclock
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol

import numpy as np

from ..baselines import network_expansion_cloak, random_sampling_cloak, verify_baseline
from ..config import BASELINE_NAMES, ENGINE_MODES, RunConfig
from ..engine.core import Dropped, Served, StarCloakEngine
from ..engine.prune import CloakedSubgraph
from ..network import NetworkIndex
from ..queries import Query
from .lbs import PoiStore, candidate_result, exact_knn, filter_result
from .metrics import MetricsRecord, collect_metrics, sample_ids
from .mobility import make_world, step_simulation


class Anonymizer(Protocol):
    def submit(self, q: Query) -> None: ...

    def step(self, now: float) -> list[Served | Dropped]: ...

    def close(self) -> None: ...


class BaselineAnonymizer:
    """Per-query baseline cloaking, retried every ``retry`` virtual seconds until expiry."""

    def __init__(self, index: NetworkIndex, algorithm: str, seed: int = 0, retry: float = 1.0) -> None:
        if algorithm not in BASELINE_NAMES.values():
            raise ValueError(f"unknown baseline {algorithm!r}")
        self.index = index
        self.algorithm = algorithm
        self.seed = seed
        self.retry = retry
        self.pending: dict[str, tuple[Query, float, int]] = {}
        self.live: dict[str, Query] = {}
        self.next_region = 0

    def submit(self, q: Query) -> None:
        self.pending[q.query_id] = (q, q.time, 0)
        self.live[q.query_id] = q

    def _attempt(self, q: Query, attempt: int, active: list[Query]) -> CloakedSubgraph | None:
        if self.algorithm == "random-sampling":
            rng = np.random.default_rng([self.seed, int(q.query_id, 16), attempt])
            return random_sampling_cloak(q, self.index, active, rng)
        return network_expansion_cloak(q, self.index, active)

    def step(self, now: float) -> list[Served | Dropped]:
        for qid in [k for k, q in self.live.items() if q.t_exp < now]:
            del self.live[qid]
        active = sorted(self.live.values(), key=lambda q: q.query_id)
        events: list[Served | Dropped] = []
        order = sorted(self.pending.values(), key=lambda t: (t[0].time, t[0].query_id))
        for q, due, attempt in order:
            if now > q.t_exp:
                del self.pending[q.query_id]
                events.append(Dropped(now, q, "expired"))
                continue
            if due > now:
                continue
            region = self._attempt(q, attempt, active)
            if region is None:
                self.pending[q.query_id] = (q, round(now + self.retry, 9), attempt + 1)
                continue
            verify_baseline(self.index, region, active)
            region = _renumber(region, self.next_region, now)
            self.next_region += 1
            del self.pending[q.query_id]
            events.append(Served(now, region))
        return events

    def close(self) -> None:
        pass


def _renumber(region: CloakedSubgraph, cand_id: int, now: float) -> CloakedSubgraph:
    cand = dataclasses.replace(region.candidate, cand_id=cand_id, created=now)
    return dataclasses.replace(region, cand_id=cand_id, candidate=cand)


def make_anonymizer(cfg: RunConfig, index: NetworkIndex) -> Anonymizer:
    if cfg.algorithm in ENGINE_MODES:
        return StarCloakEngine(
            index,
            cfg.cost_params(),
            mode=cfg.algorithm,
            lam=cfg.lam,
            alpha=cfg.alpha,
            seed=cfg.seed,
            comb_cap=cfg.comb_cap,
            neighbor_rule=cfg.neighbor_rule,
            prune_workers=cfg.prune_workers,
        )
    return BaselineAnonymizer(index, BASELINE_NAMES[cfg.algorithm], cfg.seed, cfg.baseline_retry)


@dataclass
class RunResult:
    config: RunConfig
    events: list[dict]
    metrics: MetricsRecord
    regions: dict[int, CloakedSubgraph] = field(default_factory=dict)
    served: list[tuple[Query, int, float]] = field(default_factory=list)
    processing_ms: dict[str, float] = field(default_factory=dict)

    def log_lines(self) -> list[str]:
        return [json.dumps(e, sort_keys=True, separators=(",", ":")) for e in self.events]

    def write_log(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.log_lines()) + "\n", encoding="utf-8")


def _issue_record(q: Query) -> dict:
    p = q.profile
    return {
        "type": "issue",
        "t": q.time,
        "qid": q.query_id,
        "user": q.user_id,
        "segment": q.segment_id,
        "offset": q.offset,
        "knn": q.knn_k,
        "k": p.delta_k,
        "l": p.delta_l,
        "s": p.sigma_s,
        "st": round(p.sigma_t, 9),
        "cls": q.poi_class,
    }


def _region_record(region: CloakedSubgraph, now: float) -> dict:
    cand = region.candidate
    return {
        "type": "region",
        "t": now,
        "id": region.cand_id,
        "segments": sorted(region.segments),
        "stars": sorted(region.stars),
        "queries": [q.query_id for q in cand.queries],
        "anchors": [cand.query_star[q.query_id] for q in cand.queries],
        "cohort": len(cand.queries),
        "l_max": cand.l_max,
        "sigma_s": min(q.profile.sigma_s for q in cand.queries),
    }


def run_simulation(
    cfg: RunConfig,
    index: NetworkIndex,
    store: PoiStore,
    evaluate: bool = True,
) -> RunResult:
    """Simulate ``cfg.duration`` virtual seconds of queries, then drain until every query resolves.

    With ``evaluate`` each served query is answered through the mock LBS and
    checked against brute-force k-NN at the true location.
    """
    world = make_world(
        index,
        cfg.n_objects,
        cfg.seed,
        cfg.profiles(),
        fast_share=cfg.fast_share,
        speeds={"fast": cfg.fast_speed, "slow": cfg.slow_speed},
        n_classes=cfg.n_classes,
    )
    anon = make_anonymizer(cfg, index)
    events: list[dict] = []
    regions: dict[int, CloakedSubgraph] = {}
    served: list[tuple[Query, int, float]] = []
    timings: dict[str, float] = {}
    anon_wall = 0.0
    horizon = cfg.duration
    step = 0
    try:
        while True:
            step += 1
            now = round(step * cfg.dt, 9)
            if now > horizon:
                break
            if now <= cfg.duration:
                for q in step_simulation(world, cfg.dt):
                    events.append(_issue_record(q))
                    anon.submit(q)
                    horizon = max(horizon, q.t_exp + cfg.dt)
            t0 = wallclock.perf_counter()
            outcomes = anon.step(now)
            anon_wall += wallclock.perf_counter() - t0
            for ev in outcomes:
                if isinstance(ev, Dropped):
                    events.append({"type": "drop", "t": now, "qid": ev.query.query_id, "reason": ev.reason})
                    continue
                region = ev.region
                regions[region.cand_id] = region
                events.append(_region_record(region, now))
                for q in region.candidate.queries:
                    rec = {"type": "serve", "t": now, "qid": q.query_id, "region": region.cand_id}
                    if evaluate:
                        t1 = wallclock.perf_counter()
                        cand = candidate_result(q, store, index, region.segments, region.border_nodes)
                        answer = filter_result(q, store, index, cand)
                        timings[q.query_id] = (wallclock.perf_counter() - t1) * 1000
                        exact = exact_knn(q, store, index)
                        rec["cand"] = len(cand)
                        rec["ok"] = answer == exact
                        rec["contained"] = set(exact) <= cand
                    events.append(rec)
                    served.append((q, region.cand_id, now))
    finally:
        anon.close()
    metrics = collect_metrics(events, timings, anon_wall, cfg.metric_sample, cfg.seed)
    return RunResult(cfg, events, metrics, regions, served, timings)


def served_sample(result: RunResult, size: int) -> list[str]:
    return sample_ids([q.query_id for q, _, _ in result.served], size, result.config.seed)


def iter_regions(result: RunResult) -> Iterable[CloakedSubgraph]:
    for rid in sorted(result.regions):
        yield result.regions[rid]
