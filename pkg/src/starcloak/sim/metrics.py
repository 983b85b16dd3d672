"""Aggregate run metrics from an event log."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, Mapping

import numpy as np


@dataclass(frozen=True)
class MetricsRecord:
    issued: int = 0
    served: int = 0
    success_rate: float = 0.0
    anonymization_time: float = 0.0
    processing_ms: float = 0.0
    candidate_size: float = 0.0
    throughput: float = 0.0
    sample_size: int = 0
    answers_correct: int = 0
    containment_ok: int = 0
    empty: bool = False

    def as_row(self) -> dict:
        return asdict(self)


def sample_ids(served_ids: list[str], size: int, seed: int) -> list[str]:
    """Fixed-size deterministic sample of served query ids."""
    ids = sorted(served_ids)
    if len(ids) <= size:
        return ids
    rng = np.random.default_rng([seed, 0x5A3])
    pick = rng.choice(len(ids), size=size, replace=False)
    return sorted(ids[i] for i in pick)


def collect_metrics(
    events: Iterable[Mapping],
    processing_ms: Mapping[str, float] | None = None,
    anonymizer_seconds: float = 0.0,
    sample_size: int = 200,
    seed: int = 0,
) -> MetricsRecord:
    """Success rate over issued queries; time, size and cost figures over served ones.

    ``processing_ms`` maps query ids to wall milliseconds of the service-side
    evaluation; candidate size and processing time are averaged over the same
    fixed-size sample of served queries.
    """
    issued: dict[str, float] = {}
    served: dict[str, Mapping] = {}
    for ev in events:
        kind = ev.get("type")
        if kind == "issue":
            issued[ev["qid"]] = ev["t"]
        elif kind == "serve":
            served[ev["qid"]] = ev
    if not issued:
        return MetricsRecord(empty=True)
    rate = len(served) / len(issued)
    waits = [served[q]["t"] - issued[q] for q in sorted(served)]
    sample = sample_ids(list(served), sample_size, seed)
    sizes = [served[q].get("cand", 0) for q in sample]
    timings = processing_ms or {}
    ms = [timings[q] for q in sample if q in timings]
    qps = len(issued) / anonymizer_seconds if anonymizer_seconds > 0 else 0.0
    return MetricsRecord(
        issued=len(issued),
        served=len(served),
        success_rate=rate,
        anonymization_time=float(np.mean(waits)) if waits else 0.0,
        processing_ms=float(np.mean(ms)) if ms else 0.0,
        candidate_size=float(np.mean(sizes)) if sizes else 0.0,
        throughput=qps * rate,
        sample_size=len(sample),
        answers_correct=sum(1 for e in served.values() if e.get("ok")),
        containment_ok=sum(1 for e in served.values() if e.get("contained")),
    )
