from __future__ import annotations

import itertools

import numpy as np
import pytest

from starcloak.cost import CostParams
from starcloak.engine import (
    ActiveStarIndex,
    CloakingGraph,
    Dropped,
    PruningPipeline,
    Served,
    StarCloakEngine,
    Unanonymizable,
    boundary_stars,
    check_reqs,
    combine_requirements,
    compactness_ok,
    hybrid_step,
    prune,
    run_engine,
    search_star_set,
    search_star_set_bounded,
    select_star,
    verify_emission,
)
from starcloak.engine.search import CandidateStarSet
from starcloak.network import NetworkIndex
from starcloak.queries import ExpirationHeap
from starcloak.sim.synthetic import grid_network

from .helpers import (
    WALKTHROUGH_ASSIGNMENT,
    build,
    junction_network,
    pruning_network,
    walkthrough_network,
    make_query,
    random_network,
    segment_between,
    spur_segment,
)


@pytest.fixture(scope="module")
def junction():
    return NetworkIndex(junction_network())


@pytest.fixture(scope="module")
def walk():
    return NetworkIndex(walkthrough_network())


@pytest.fixture(scope="module")
def grid():
    return NetworkIndex(grid_network(8, 8, seed=3))


def random_workload(index: NetworkIndex, rng, n: int = 120, span: float = 30.0):
    segs = sorted(s for s in index.segments if index.segment_stars(s))
    out = []
    for u in range(n):
        out.append(
            make_query(
                segs[int(rng.integers(len(segs)))],
                user=u,
                time=round(float(rng.uniform(0, span)), 1),
                k=int(rng.integers(1, 5)),
                l=int(rng.integers(1, 6)),
                s=int(rng.integers(1, 4)),
                t=float(rng.uniform(2, 10)),
            )
        )
    return out


def outcome(events):
    rows = []
    for e in events:
        if isinstance(e, Served):
            rows.append(("S", e.time, sorted(e.region.query_ids), sorted(e.region.segments)))
        else:
            rows.append(("D", e.time, e.query.query_id, e.reason))
    return rows


# -- star selection ------------------------------------------------------------------


def test_one_active_end_wins(junction):
    act = ActiveStarIndex()
    act.assign(segment_between(junction, 5, 4), 5)
    q = make_query(segment_between(junction, 5, 6), user=1)
    for seed in range(20):
        a = ActiveStarIndex()
        a.assign(segment_between(junction, 5, 4), 5)
        assert select_star(q, a, junction, CostParams(), np.random.default_rng(seed)) == 5


def test_assigned_segment_keeps_its_star(junction):
    act = ActiveStarIndex()
    seg = segment_between(junction, 5, 6)
    act.assign(seg, 6)
    act.attach(make_query(seg, user=9))
    q = make_query(seg, user=1)
    assert select_star(q, act, junction, CostParams(), np.random.default_rng(0)) == 6
    assert act.live[seg] == 2


def test_dead_end_segment_uses_its_only_star(junction):
    q = make_query(segment_between(junction, 1, 2), user=1)
    assert select_star(q, ActiveStarIndex(), junction, CostParams(), np.random.default_rng(0)) == 2


def test_segment_without_star_is_unanonymizable():
    index = NetworkIndex(build([(1, 2), (2, 3)]))
    with pytest.raises(Unanonymizable):
        select_star(make_query(0), ActiveStarIndex(), index, CostParams(), np.random.default_rng(0))


def test_equal_costs_choose_each_end_half_the_time(junction):
    seg = segment_between(junction, 5, 6)
    rng = np.random.default_rng(42)
    hits = 0
    for u in range(10_000):
        star = select_star(make_query(seg, user=u), ActiveStarIndex(), junction, CostParams(), rng, cost_fn=lambda q, s: 1.0)
        hits += star == 5
    assert abs(hits - 5000) <= 150


def test_cheaper_end_is_favoured_in_proportion(junction):
    seg = segment_between(junction, 5, 6)
    rng = np.random.default_rng(7)
    costs = {5: 1.0, 6: 3.0}  # P(5) = 3 / 4
    hits = sum(
        select_star(make_query(seg, user=u), ActiveStarIndex(), junction, CostParams(), rng, cost_fn=lambda q, s: costs[s]) == 5
        for u in range(10_000)
    )
    assert abs(hits - 7500) <= 150


def test_detach_deactivates_quiet_star(junction):
    act = ActiveStarIndex()
    a, b = segment_between(junction, 5, 4), segment_between(junction, 5, 10)
    qa, qb = make_query(a, user=1), make_query(b, user=2)
    act.assign(a, 5)
    act.attach(qa)
    act.assign(b, 5)
    act.attach(qb)
    act.detach(qa.query_id)
    assert 5 in act.active and a in act.assignment
    act.detach(qb.query_id)
    assert act.active == set() and act.assignment == {}
    act.check_integrity()


# -- cloaking graph ------------------------------------------------------------------


def test_requirements_combine_strictest():
    qs = [make_query(0, user=1, k=2, l=5, s=3), make_query(0, user=2, k=4, l=1, s=2)]
    assert combine_requirements(qs) == (4, 5, 2)


def test_line7_check_prefers_existing_node(junction):
    g = CloakingGraph(junction)
    seg = segment_between(junction, 5, 6)
    v = g.add_query(make_query(seg, user=1, k=2, l=2, s=2), 5)
    # tighter spatial tolerance, but its own ball still meets both l requirements
    w = g.add_query(make_query(seg, user=2, k=2, l=2, s=1), 5)
    assert w is v and v.sigma_s == 1
    # a ball too small for the requested l opens a new node
    x = g.add_query(make_query(seg, user=3, k=2, l=50, s=0), 5)
    assert x is not v and len(g.star_map[5]) == 2
    g.check_integrity()


@pytest.mark.parametrize("seed", range(15))
def test_random_add_remove_keeps_graph_consistent(seed):
    rng = np.random.default_rng(seed)
    index = NetworkIndex(random_network(rng, 35, p_extra=0.5))
    stars = sorted(index.stars)
    if not stars:
        return
    g = CloakingGraph(index, "stars" if seed % 2 else "segments")
    live = []
    for u in range(80):
        if live and rng.random() < 0.4:
            qid = live.pop(int(rng.integers(len(live))))
            v = g.remove_query(qid)
            assert v is None or qid not in v.queries
        else:
            star = stars[int(rng.integers(len(stars)))]
            seg = sorted(index.star_segments(star))[0]
            q = make_query(seg, user=u, k=int(rng.integers(1, 5)), l=int(rng.integers(1, 6)), s=int(rng.integers(0, 4)))
            v = g.add_query(q, star)
            live.append(q.query_id)
            assert v.star == star and g.node_of(q.query_id) is v
        g.check_integrity()


# -- requirement checks and search --------------------------------------------------


def _graph_with(index, placements):
    g = CloakingGraph(index)
    nodes = []
    for u, (star, k, l, s) in enumerate(placements):
        seg = sorted(index.star_segments(star))[0]
        nodes.append(g.add_query(make_query(seg, user=u, k=k, l=l, s=s), star))
    return g, nodes


def test_check_reqs_cases(walk):
    g, (a, b, c) = _graph_with(walk, [(6, 3, 1, 100), (7, 3, 1, 100), (8, 3, 1, 100)])
    assert check_reqs(g, [a]) is None
    assert check_reqs(g, [a, b]) is None
    found = check_reqs(g, [a, b, c])
    assert found.k_max == 3 and found.fixed == {6, 7, 8}
    assert found.query_star == {q.query_id: v.star for v in (a, b, c) for q in v.queries.values()}
    g2, (d,) = _graph_with(walk, [(6, 1, 99, 1)])
    assert check_reqs(g2, [d]) is None  # too few segments within one hop


@pytest.mark.parametrize("seed", range(40))
def test_basic_search_finds_a_set_iff_some_clique_does(seed):
    rng = np.random.default_rng(seed)
    index = NetworkIndex(random_network(rng, 25, p_extra=0.6))
    stars = sorted(index.stars)
    if len(stars) < 2:
        return
    n = int(rng.integers(2, 7))
    g, nodes = _graph_with(
        index,
        [(stars[int(rng.integers(len(stars)))], int(rng.integers(1, 5)), int(rng.integers(1, 6)), int(rng.integers(1, 4))) for _ in range(n)],
    )
    nodes = list(g.nodes.values())
    v = nodes[0]
    others = [g.nodes[u] for u in sorted(v.neighbors)]
    exists = False
    for r in range(len(others) + 1):
        for combo in itertools.combinations(others, r):
            if all(b.node_id in a.neighbors for a, b in itertools.combinations(combo, 2)):
                if check_reqs(g, [v, *combo]) is not None:
                    exists = True
    got = search_star_set(g, v)
    assert (got is not None) == exists
    if got is not None:
        members = [g.nodes[i] for i in got.node_ids]
        assert check_reqs(g, members) is not None
        assert got.stars == frozenset.intersection(*(m.theta for m in members))


def test_bounded_search_stops_at_empty_level(walk):
    g, (q1, q2, q3) = _graph_with(walk, [(4, 3, 1, 100), (12, 3, 1, 100), (6, 3, 1, 100)])
    assert search_star_set(g, q3) is not None
    assert search_star_set_bounded(g, q3, 1) is None
    with pytest.raises(ValueError):
        search_star_set_bounded(g, q3, 0.5)


def test_hybrid_step_lists_nodes_near_expiry(walk):
    g = CloakingGraph(walk)
    h = ExpirationHeap()
    qs = [make_query(spur_segment(walk, s), user=u, t=t) for u, (s, t) in enumerate([(6, 3.0), (8, 9.0), (8, 1.0)])]
    for q, s in zip(qs, (6, 8, 8)):
        g.add_query(q, s)
        h.push(q)
    near = hybrid_step(h, g, alpha=3.0, now=0.0)
    assert near == [g.query_map[qs[2].query_id], g.query_map[qs[0].query_id]]
    assert hybrid_step(h, g, 3.0, 0.0, exclude={qs[2].query_id}) == [g.query_map[qs[0].query_id]]
    with pytest.raises(ValueError):
        hybrid_step(h, g, -1.0, 0.0)


# -- pruning -----------------------------------------------------------------------


def test_pruning_walkthrough_forced_order():
    index = NetworkIndex(pruning_network())
    theta = frozenset({5, 7, 9, 10, 12, 13, 15})
    cand = CandidateStarSet(theta, (0,), (), l_max=9, k_max=1, fixed=frozenset({12}))
    assert boundary_stars(index, set(theta), cand.fixed) == [5, 7, 9, 13]
    order = iter([5, 7, 9])
    out = prune(cand, index, pick=lambda bs: next(order))
    assert out.trace == (("remove", 5, 12), ("remove", 7, 10), ("restore", 9, 8))
    assert out.stars == {9, 10, 12, 13, 15}
    assert len(out.segments) == 10


@pytest.mark.parametrize("block", range(10))
def test_seeded_pruning_contract(block):
    for seed in range(block * 50, block * 50 + 50):
        rng = np.random.default_rng(seed)
        index = NetworkIndex(random_network(rng, int(rng.integers(10, 50)), p_extra=0.5))
        stars = sorted(index.stars)
        if not stars:
            continue
        centre = stars[int(rng.integers(len(stars)))]
        theta = index.stars_within(centre, int(rng.integers(1, 4)))
        fixed = frozenset(s for s in theta if rng.random() < 0.2) | {centre}
        l_max = int(rng.integers(1, index.segment_count(theta) + 1))
        cand = CandidateStarSet(theta, (0,), (), l_max, 1, fixed)
        out = prune(cand, index, np.random.default_rng(seed))
        assert fixed <= out.stars <= theta
        assert len(out.segments) >= l_max
        assert out.segments == index.star_graph.segments_of(out.stars)
        if out.trace and out.trace[-1][0] == "restore":
            assert out.trace[-1][1] in out.stars
            assert out.trace[-1][2] < l_max
        assert all(a == "remove" for a, _, _ in out.trace[:-1])
        assert out == prune(cand, index, np.random.default_rng(seed))


def test_pipeline_threads_match_inline(grid):
    rng = np.random.default_rng(1)
    stars = sorted(grid.stars)
    cands = []
    for i in range(40):
        theta = grid.stars_within(stars[int(rng.integers(len(stars)))], 2)
        cands.append(CandidateStarSet(theta, (i,), (), 3, 1, frozenset(), cand_id=i))
    results = []
    for workers in (0, 3):
        p = PruningPipeline(grid, run_seed=5, workers=workers)
        for c in cands:
            p.submit(c)
        results.append([(r.cand_id, r.stars) for r in p.drain()])
        p.close()
    assert results[0] == results[1]


# -- engine loop -------------------------------------------------------------------


def test_single_relaxed_query_is_served_at_once(junction):
    eng = StarCloakEngine(junction)
    eng.submit(make_query(segment_between(junction, 5, 6), user=1, time=0))
    (ev,) = eng.step(0.0)
    assert isinstance(ev, Served) and ev.time == 0.0
    assert len(ev.region.segments) >= 1


def test_lonely_query_is_dropped_at_expiry(junction):
    eng = StarCloakEngine(junction)
    q = make_query(segment_between(junction, 5, 6), user=1, time=0, k=3, t=5)
    events = list(run_engine(eng, [q], tick=1.0))
    assert len(events) == 1
    assert isinstance(events[0], Dropped) and events[0].time == 5.0 and events[0].reason == "expired"


def _walk_queries(index, assignment, users=None, t=10.0):
    users = users or range(1, len(assignment) + 1)
    return [
        make_query(spur_segment(index, s), user=u, time=float(i), k=3, l=1, s=100, t=t, qid=f"q{u}")
        for i, (u, s) in enumerate(zip(users, assignment))
    ]


def test_basic_walkthrough_groups_in_arrival_order(walk):
    eng = StarCloakEngine(walk, mode="basic")
    served = [e for e in run_engine(eng, _walk_queries(walk, WALKTHROUGH_ASSIGNMENT), tick=1.0) if isinstance(e, Served)]
    assert [sorted(e.region.query_ids) for e in served] == [["q1", "q2", "q3"], ["q4", "q5", "q6"], ["q7", "q8", "q9"]]


def test_bounded_walkthrough_serves_everyone_compactly(walk):
    eng = StarCloakEngine(walk, mode="bounded", lam=1)
    served = [e for e in run_engine(eng, _walk_queries(walk, WALKTHROUGH_ASSIGNMENT), tick=1.0) if isinstance(e, Served)]
    assert sorted(q for e in served for q in e.region.query_ids) == [f"q{i}" for i in range(1, 10)]
    for e in served:
        assert compactness_ok(walk, e.region.candidate.fixed, 1)


def test_bounded_drops_what_hybrid_rescues(walk):
    qs = _walk_queries(walk, [6, 8, 8], users=[3, 4, 9])
    bounded = list(run_engine(StarCloakEngine(walk, mode="bounded", lam=1), qs, tick=1.0))
    assert all(isinstance(e, Dropped) for e in bounded) and len(bounded) == 3
    hybrid = list(run_engine(StarCloakEngine(walk, mode="hybrid", lam=1, alpha=2), qs, tick=1.0))
    assert len(hybrid) == 1 and isinstance(hybrid[0], Served)
    assert sorted(hybrid[0].region.query_ids) == ["q3", "q4", "q9"]
    # rescued at the alpha threshold of the earliest query, not before
    assert hybrid[0].time == qs[0].t_exp - 2


@pytest.mark.parametrize("seed", range(4))
def test_wide_compactness_factor_equals_basic(grid, seed):
    qs = random_workload(grid, np.random.default_rng(seed))
    basic = outcome(run_engine(StarCloakEngine(grid, mode="basic", seed=seed), qs, tick=0.5))
    wide = outcome(run_engine(StarCloakEngine(grid, mode="bounded", lam=1000, seed=seed), qs, tick=0.5))
    assert basic == wide


@pytest.mark.parametrize("mode", ["basic", "bounded", "hybrid"])
@pytest.mark.parametrize("seed", range(3))
def test_random_runs_keep_invariants(grid, mode, seed):
    qs = random_workload(grid, np.random.default_rng(100 + seed))
    eng = StarCloakEngine(grid, mode=mode, lam=1, seed=seed, debug=True)
    events = list(run_engine(eng, qs, tick=0.5))
    seen = [qid for e in events for qid in (e.region.query_ids if isinstance(e, Served) else [e.query.query_id])]
    assert sorted(seen) == sorted(q.query_id for q in qs)
    for e in events:
        if isinstance(e, Served):
            verify_emission(grid, e.region, e.time)
            if mode == "bounded":
                assert compactness_ok(grid, e.region.candidate.fixed, 1)


@pytest.mark.parametrize("mode", ["basic", "bounded", "hybrid"])
def test_engine_is_deterministic_with_prune_workers(grid, mode):
    qs = random_workload(grid, np.random.default_rng(9))
    runs = []
    for workers in (0, 0, 2):
        eng = StarCloakEngine(grid, mode=mode, seed=4, prune_workers=workers)
        runs.append(outcome(run_engine(eng, qs, tick=0.5)))
        eng.close()
    assert runs[0] == runs[1] == runs[2]


def test_unknown_mode_rejected(junction):
    with pytest.raises(ValueError):
        StarCloakEngine(junction, mode="fast")
