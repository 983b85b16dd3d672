"""Attack evaluation over the regions a run emitted."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..attacks import (
    AttackKnowledge,
    expansion_replayer,
    linkability,
    sampling_replayer,
    starcloak_replayer,
)
from ..config import ENGINE_MODES, RunConfig
from ..network import NetworkIndex
from ..queries import QueryProfile
from .runner import RunResult

REPORT_FIELDS = [
    "region_id",
    "algorithm",
    "size",
    "k",
    "injections",
    "entropy",
    "normalized_entropy",
    "max_linkability",
]

REPLAY_SIGMA_T = 1e6


@dataclass(frozen=True)
class AttackRow:
    region_id: int
    algorithm: str
    size: int
    k: int
    injections: int
    entropy: float
    normalized_entropy: float
    max_linkability: float

    def as_row(self) -> dict:
        return {f: getattr(self, f) for f in REPORT_FIELDS}


def pick_regions(records: list[dict], limit: int, seed: int) -> list[dict]:
    """Deterministic subset of region records, in id order."""
    if len(records) <= limit:
        return records
    rng = np.random.default_rng([seed, 0xA77])
    idx = sorted(rng.choice(len(records), size=limit, replace=False))
    return [records[i] for i in idx]


def _replayer(cfg: RunConfig, index: NetworkIndex, rec: dict, victim: dict):
    size = len(rec["segments"])
    if cfg.algorithm in ENGINE_MODES:
        profile = QueryProfile(rec["cohort"], victim["l"], victim["s"], REPLAY_SIGMA_T)
        return starcloak_replayer(
            index,
            profile,
            mode=cfg.algorithm,
            lam=cfg.lam,
            alpha=cfg.alpha,
            cost_params=cfg.cost_params(),
            neighbor_rule=cfg.neighbor_rule,
        )
    if cfg.algorithm == "random":
        return sampling_replayer(index, size, victim["s"])
    return expansion_replayer(index, size, victim["s"])


def injected_segments(rec: dict, issues: dict[str, dict], count: int, seed: int) -> tuple[int, ...]:
    """True segments of ``count`` co-users the adversary controls.

    Engine cohorts supply real co-users (all but the first query, the victim).
    Single-query baseline regions have no logged co-users, so the injected
    queries land on seeded picks from the region; baselines ignore them anyway.
    """
    co = [issues[q]["segment"] for q in rec["queries"][1:]]
    if co:
        return tuple(sorted(co[: min(count, len(co))]))
    segs = sorted(rec["segments"])
    rng = np.random.default_rng([seed, rec["id"], 0x1A7])
    return tuple(sorted(segs[int(i)] for i in rng.integers(len(segs), size=count)))


def cohort_size(cfg: RunConfig, rec: dict, issues: dict[str, dict]) -> int:
    if cfg.algorithm in ENGINE_MODES:
        return rec["cohort"]
    return issues[rec["queries"][0]]["k"]


def evaluate_run(
    result: RunResult,
    index: NetworkIndex,
    injections: list[int] | None = None,
    max_regions: int | None = None,
) -> list[AttackRow]:
    """Linkability and entropy per region (victim = the region's first query), per injection level."""
    cfg = result.config
    injections = injections if injections is not None else cfg.injections
    limit = max_regions if max_regions is not None else cfg.max_regions
    issues = {e["qid"]: e for e in result.events if e["type"] == "issue"}
    regions = [e for e in result.events if e["type"] == "region"]
    rows = []
    for rec in pick_regions(regions, limit, cfg.seed):
        victim = issues[rec["queries"][0]]
        replay = _replayer(cfg, index, rec, victim)
        k = cohort_size(cfg, rec, issues)
        for j in injections:
            inj = injected_segments(rec, issues, min(j, k - 1), cfg.seed)
            knowledge = AttackKnowledge(
                replay=replay,
                injected=inj,
                cohort_k=k,
                repetitions=cfg.repetitions,
                budget=cfg.budget,
                seed=cfg.seed,
            )
            prof = linkability(rec["segments"], knowledge)
            rows.append(
                AttackRow(
                    region_id=rec["id"],
                    algorithm=cfg.algorithm,
                    size=len(rec["segments"]),
                    k=k,
                    injections=j,
                    entropy=prof.entropy,
                    normalized_entropy=prof.normalized_entropy,
                    max_linkability=prof.max_linkability,
                )
            )
    return rows
