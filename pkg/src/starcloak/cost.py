"""Evaluation, communication and combined cost estimates for a cloaked subgraph."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

from .network import NetworkIndex, subgraph_edges


@dataclass(frozen=True)
class CostParams:
    c_s: float = 1.0
    c_v: float = 2.0
    c_o: float = 0.1
    rho_o: float = 1.0
    beta: float = 0.5
    res_size: float = 5.0

    def __post_init__(self) -> None:
        for name in ("c_s", "c_v", "c_o", "rho_o", "res_size"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")


@dataclass(frozen=True)
class SubgraphStats:
    segment_count: int
    border_count: int
    edge_count: int
    object_count: float | None = None  # overrides rho_o * edge_count when known


def eval_cost(params: CostParams, stats: SubgraphStats) -> float:
    return params.c_s * stats.segment_count + params.c_v * stats.border_count


def comm_cost(params: CostParams, stats: SubgraphStats, res_size: float | None = None) -> float:
    res = params.res_size if res_size is None else res_size
    objects = params.rho_o * stats.edge_count if stats.object_count is None else stats.object_count
    return params.c_o * (res * stats.border_count + objects)


def overall_cost(params: CostParams, stats: SubgraphStats, res_size: float | None = None) -> float:
    return params.beta * comm_cost(params, stats, res_size) + (1.0 - params.beta) * eval_cost(params, stats)


def subgraph_stats(
    index: NetworkIndex,
    segment_ids: Iterable[int],
    edge_objects: Mapping[int, int] | None = None,
) -> SubgraphStats:
    segs = set(segment_ids)
    edges = subgraph_edges(index.segments, segs)
    borders = index.border_nodes(segs)
    objects = None if edge_objects is None else float(sum(edge_objects.get(e, 0) for e in edges))
    return SubgraphStats(len(segs), len(borders), len(edges), objects)


def star_cost(
    params: CostParams,
    index: NetworkIndex,
    star: int,
    knn_k: int | None = None,
    edge_objects: Mapping[int, int] | None = None,
) -> float:
    """Overall cost of answering a query over the subgraph made of one star's segments."""
    if edge_objects is None:
        segs, borders, edges = index.star_stats(star)
        stats = SubgraphStats(segs, borders, edges)
    else:
        stats = subgraph_stats(index, index.star_segments(star), edge_objects)
    return overall_cost(params, stats, knn_k)
