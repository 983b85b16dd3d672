from .core import Dropped, PrivacyViolation, Served, StarCloakEngine, run_engine, verify_emission
from .graph import CloakingGraph, CloakingNode, combine_requirements
from .prune import CloakedSubgraph, PruningPipeline, boundary_stars, prune
from .search import (
    CandidateStarSet,
    check_reqs,
    compactness_ok,
    hybrid_step,
    search_star_set,
    search_star_set_bounded,
)
from .select import ActiveStarIndex, Unanonymizable, select_star

__all__ = [
    "ActiveStarIndex",
    "CandidateStarSet",
    "CloakedSubgraph",
    "CloakingGraph",
    "CloakingNode",
    "Dropped",
    "PrivacyViolation",
    "PruningPipeline",
    "Served",
    "StarCloakEngine",
    "Unanonymizable",
    "boundary_stars",
    "check_reqs",
    "combine_requirements",
    "compactness_ok",
    "hybrid_step",
    "prune",
    "run_engine",
    "search_star_set",
    "search_star_set_bounded",
    "select_star",
    "verify_emission",
]
