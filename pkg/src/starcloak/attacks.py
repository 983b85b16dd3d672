"""Replay-based attacks on cloaked regions: likelihoods, injections, linkability and entropy."""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .baselines import expansion_replay, sampling_replay
from .cost import CostParams
from .network import NetworkIndex
from .queries import Query, QueryProfile

# replay(hypothesis segment, co-user placement, rng) -> replayed region or None
Replayer = Callable[[int, tuple[int, ...], np.random.Generator], "frozenset[int] | None"]


class AttackConfigError(ValueError):
    pass


@dataclass
class AttackKnowledge:
    """What the adversary brings to one region.

    ``prior`` maps segments to probabilities (uniform when None) and is
    renormalised over the region.  ``injected`` lists the true segments of
    queries the adversary planted in the cohort.  ``method`` picks the
    placement sum: ``exact`` enumeration, ``sampled`` Monte Carlo, or ``auto``
    (exact while the placement count fits in ``budget``).
    """

    replay: Replayer
    prior: Mapping[int, float] | None = None
    injected: tuple[int, ...] = ()
    cohort_k: int | None = None
    repetitions: int = 32
    budget: int = 100_000
    seed: int = 0
    method: str = "auto"

    def __post_init__(self) -> None:
        if self.repetitions < 1 or self.budget < 1:
            raise AttackConfigError("repetitions and budget must be at least 1")
        if self.method not in ("auto", "exact", "sampled"):
            raise AttackConfigError(f"unknown placement method {self.method!r}")
        if self.prior is not None:
            total = sum(self.prior.values())
            if not math.isclose(total, 1.0, abs_tol=1e-9):
                raise AttackConfigError(f"segment prior sums to {total}, not 1")


@dataclass(frozen=True)
class LinkabilityProfile:
    segments: tuple[int, ...]
    values: np.ndarray
    entropy: float
    normalized_entropy: float

    @property
    def max_linkability(self) -> float:
        return float(self.values.max())


def region_prior(region: Sequence[int], prior: Mapping[int, float] | None) -> dict[int, float]:
    """Segment prior restricted to the region and renormalised (uniform when absent or all zero)."""
    segs = sorted(region)
    if prior is not None:
        w = {s: float(prior.get(s, 0.0)) for s in segs}
        total = sum(w.values())
        if total > 0:
            return {s: v / total for s, v in w.items()}
    return {s: 1.0 / len(segs) for s in segs}


def overlap(region: frozenset[int], replayed: frozenset[int] | None) -> float:
    if not replayed:
        return 0.0
    return len(region & replayed) / len(region)


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng([seed, *key])


def replay_likelihood(
    region: Iterable[int],
    s: int,
    knowledge: AttackKnowledge,
    placement: tuple[int, ...] = (),
) -> float:
    """Mean overlap between the region and replays with the user placed on ``s``."""
    S = frozenset(region)
    if s not in S:
        raise ValueError(f"segment {s} is not in the region")
    reps = 1 if getattr(knowledge.replay, "deterministic", False) else knowledge.repetitions
    total = 0.0
    for r in range(reps):
        rng = _rng(knowledge.seed, s, r, *placement)
        total += overlap(S, knowledge.replay(s, placement, rng))
    return total / reps


def multinomial(placement: Sequence[int]) -> float:
    counts = Counter(placement)
    out = math.factorial(len(placement))
    for c in counts.values():
        out //= math.factorial(c)
    return float(out)


def placement_prior(placement: Sequence[int], prior: Mapping[int, float]) -> float:
    """Probability of the multiset ``placement`` when co-users land i.i.d. by ``prior``."""
    p = multinomial(placement)
    for s in placement:
        p *= prior[s]
    return p


def placement_count(n_segments: int, n_slots: int) -> int:
    return math.comb(n_segments + n_slots - 1, n_slots) if n_slots > 0 else 1


def enumerate_placements(region: Iterable[int], n_slots: int) -> list[tuple[int, ...]]:
    return list(itertools.combinations_with_replacement(sorted(region), n_slots))


def apply_injection(
    placements: Sequence[tuple[tuple[int, ...], float]],
    injected: Sequence[int],
) -> list[tuple[tuple[int, ...], float]]:
    """Zero the weight of placements that cannot host every injected query."""
    need = Counter(injected)
    out = []
    for m, w in placements:
        have = Counter(m)
        ok = all(have[s] >= c for s, c in need.items())
        out.append((m, w if ok else 0.0))
    return out


def consistent_placements(
    S: frozenset[int],
    prior: Mapping[int, float],
    injected: tuple[int, ...],
    n: int,
) -> list[tuple[tuple[int, ...], float]]:
    """Placements of ``n`` co-users that host every injected query, with their prior mass.

    Same survivors as filtering every placement through ``apply_injection``,
    but only the free slots are enumerated.
    """
    out = []
    for free in enumerate_placements(S, n - len(injected)):
        m = tuple(sorted(free + injected))
        out.append((m, placement_prior(m, prior)))
    return out


def _slots(region: frozenset[int], knowledge: AttackKnowledge, k: int | None) -> int:
    k = k if k is not None else knowledge.cohort_k
    if k is None:
        raise AttackConfigError("cohort size unknown: set cohort_k")
    if k < 1:
        raise AttackConfigError("cohort size must be at least 1")
    return k - 1


def correlation_likelihood(
    region: Iterable[int],
    s: int,
    knowledge: AttackKnowledge,
    k: int | None = None,
) -> float:
    """Prior-weighted replay likelihood summed over co-user placements inside the region."""
    S = frozenset(region)
    if s not in S:
        raise ValueError(f"segment {s} is not in the region")
    n = _slots(S, knowledge, k)
    prior = region_prior(sorted(S), knowledge.prior)
    injected = tuple(sorted(knowledge.injected))
    if len(injected) > n:
        raise AttackConfigError(f"{len(injected)} injected queries exceed {n} co-user slots")
    free = n - len(injected)

    if knowledge.method == "auto":
        exact = placement_count(len(S), free) <= knowledge.budget
    else:
        exact = knowledge.method == "exact"
    if getattr(knowledge.replay, "ignores_placement", False):
        # the sum factors: surviving placement mass times one placement-free likelihood
        mass = _placement_mass(S, knowledge, prior, injected, n, exact)
        return prior[s] * mass * replay_likelihood(S, s, knowledge)
    if exact:
        total = 0.0
        for m, w in consistent_placements(S, prior, injected, n):
            total += w * replay_likelihood(S, s, knowledge, m)
        return prior[s] * total
    return prior[s] * _sampled_sum(S, s, knowledge, prior, injected, n)


def _placement_mass(
    S: frozenset[int],
    knowledge: AttackKnowledge,
    prior: dict[int, float],
    injected: tuple[int, ...],
    n: int,
    exact: bool,
) -> float:
    if exact:
        return sum(w for _, w in consistent_placements(S, prior, injected, n))
    return _sampled_sum(S, None, knowledge, prior, injected, n)


def _sampled_sum(
    S: frozenset[int],
    s: int | None,
    knowledge: AttackKnowledge,
    prior: dict[int, float],
    injected: tuple[int, ...],
    n: int,
) -> float:
    """Importance-sampled estimate of the placement sum (of bare prior mass when ``s`` is None).

    Free co-user slots are drawn i.i.d. from the prior with a stream that
    ignores ``s`` and the injections (common random numbers), and each draw is
    reweighted to the prior mass of the full placement it completes.
    """
    segs = sorted(S)
    probs = np.array([prior[x] for x in segs])
    free = n - len(injected)
    draw_rng = _rng(knowledge.seed, 0x3C)
    draws = draw_rng.choice(len(segs), size=(knowledge.budget, n), p=probs)[:, :free]
    inj_mass = 1.0
    for x in injected:
        inj_mass *= prior[x]
    total = 0.0
    cache: dict[tuple[int, ...], float] = {}
    for b in range(knowledge.budget):
        free_part = tuple(sorted(segs[i] for i in draws[b]))
        m = tuple(sorted(free_part + injected))
        like = cache.get(m)
        if like is None:
            like = cache[m] = 1.0 if s is None else replay_likelihood(S, s, knowledge, m)
        weight = multinomial(m) / multinomial(free_part) * inj_mass
        total += weight * like
    return total / knowledge.budget


def entropy(values: Sequence[float] | np.ndarray) -> tuple[float, float]:
    """Segment entropy in bits and its normalisation by log2 of the segment count."""
    v = np.asarray(values, dtype=float)
    nz = v[v > 0]
    h = float(-(nz * np.log2(nz)).sum()) if nz.size else 0.0
    h = max(h, 0.0)
    norm = 0.0 if v.size <= 1 else min(1.0, h / math.log2(v.size))
    return h, norm


def normalize_scores(segments: Sequence[int], scores: Sequence[float]) -> LinkabilityProfile:
    arr = np.asarray(scores, dtype=float)
    total = arr.sum()
    if not total > 0:
        arr = np.full(len(segments), 1.0 / len(segments))
    else:
        arr = arr / total
    h, norm = entropy(arr)
    return LinkabilityProfile(tuple(segments), arr, h, norm)


def linkability(region: Iterable[int], knowledge: AttackKnowledge, k: int | None = None) -> LinkabilityProfile:
    """Posterior association of the victim with each segment of the region."""
    segs = sorted(frozenset(region))
    if not segs:
        raise ValueError("empty region")
    scores = [correlation_likelihood(segs, s, knowledge, k) for s in segs]
    return normalize_scores(segs, scores)


# -- replayable anonymizers -----------------------------------------------------


def sampling_replayer(index: NetworkIndex, size: int, sigma_s: float) -> Replayer:
    def replay(s: int, placement: tuple[int, ...], rng: np.random.Generator) -> frozenset[int] | None:
        return sampling_replay(index, s, size, sigma_s, rng)

    replay.ignores_placement = True
    return replay


def expansion_replayer(index: NetworkIndex, size: int, sigma_s: float) -> Replayer:
    def replay(s: int, placement: tuple[int, ...], rng: np.random.Generator) -> frozenset[int] | None:
        return expansion_replay(index, s, size, sigma_s)

    replay.ignores_placement = True
    replay.deterministic = True
    return replay


def starcloak_replayer(
    index: NetworkIndex,
    profile: QueryProfile,
    mode: str = "basic",
    lam: float = 1,
    alpha: float = 2.0,
    cost_params: CostParams | None = None,
    neighbor_rule: str = "segments",
) -> Replayer:
    """Fresh engine per replay: co-users at the placement first, the victim last."""
    from .engine.core import Served, StarCloakEngine

    def replay(s: int, placement: tuple[int, ...], rng: np.random.Generator) -> frozenset[int] | None:
        engine = StarCloakEngine(
            index,
            cost_params,
            mode=mode,
            lam=lam,
            alpha=alpha,
            seed=int(rng.integers(2**62)),
            neighbor_rule=neighbor_rule,
        )
        users = list(placement) + [s]
        victim = f"v{len(users) - 1}"
        for i, seg in enumerate(users):
            engine.submit(
                Query(
                    query_id=f"v{i}",
                    user_id=i,
                    time=0.0,
                    segment_id=seg,
                    offset=index.segments[seg].length / 2,
                    knn_k=1,
                    profile=profile,
                )
            )
        for ev in engine.step(0.0):
            if isinstance(ev, Served) and victim in ev.region.query_ids:
                return ev.region.segments
        return None

    return replay
