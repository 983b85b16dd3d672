"""Network-constrained random-waypoint movement with two speed classes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..network import NetworkIndex
from ..queries import ProfileDistribution, Query, query_hash

SPEEDS = {"fast": 20.0, "slow": 8.0}
OFFSET_QUANTUM = 1 / 16  # reported offsets are dyadic so distance sums stay exact


@dataclass
class MovingObject:
    object_id: int
    speed_class: str
    speed: float
    segment_id: int
    offset: float
    direction: int  # +1 walks towards nodes[-1], -1 towards nodes[0]
    next_query: float
    move_rng: np.random.Generator = field(repr=False)
    query_rng: np.random.Generator = field(repr=False)


@dataclass
class World:
    index: NetworkIndex
    objects: list[MovingObject]
    profiles: ProfileDistribution
    n_classes: int = 1
    time: float = 0.0


def make_world(
    index: NetworkIndex,
    n_objects: int,
    seed: int,
    profiles: ProfileDistribution | None = None,
    fast_share: float = 0.5,
    speeds: dict[str, float] | None = None,
    n_classes: int = 1,
) -> World:
    """Objects placed uniformly over segments; each owns separate movement and query streams."""
    speeds = speeds or SPEEDS
    profiles = profiles or ProfileDistribution()
    segs = sorted(s for s, seg in index.segments.items() if seg.length > 0)
    objects = []
    for i in range(n_objects):
        mrng = np.random.default_rng([seed, i, 1])
        qrng = np.random.default_rng([seed, i, 2])
        seg = segs[int(mrng.integers(len(segs)))]
        cls = "fast" if mrng.random() < fast_share else "slow"
        objects.append(
            MovingObject(
                object_id=i,
                speed_class=cls,
                speed=speeds[cls],
                segment_id=seg,
                offset=float(mrng.uniform(0, index.segments[seg].length)),
                direction=1 if mrng.random() < 0.5 else -1,
                next_query=float(qrng.uniform(0, profiles.gamma[0])),
                move_rng=mrng,
                query_rng=qrng,
            )
        )
    return World(index, objects, profiles, n_classes)


def _turn(index: NetworkIndex, obj: MovingObject, node: int) -> None:
    """At a terminal: continue on a random other segment, or reverse at a dead end."""
    options = [s for s in index.node_segments.get(node, ()) if s != obj.segment_id]
    if not options:
        obj.direction = -obj.direction
        return
    nxt = options[int(obj.move_rng.integers(len(options)))]
    seg = index.segments[nxt]
    obj.segment_id = nxt
    if seg.nodes[0] == node:
        obj.offset, obj.direction = 0.0, 1
    else:
        obj.offset, obj.direction = seg.length, -1


def advance(index: NetworkIndex, obj: MovingObject, dt: float) -> None:
    remaining = obj.speed * dt
    for _ in range(10_000):
        seg = index.segments[obj.segment_id]
        room = seg.length - obj.offset if obj.direction > 0 else obj.offset
        if remaining < room:
            obj.offset += obj.direction * remaining
            return
        remaining -= room
        node = seg.nodes[-1] if obj.direction > 0 else seg.nodes[0]
        obj.offset = seg.length if obj.direction > 0 else 0.0
        _turn(index, obj, node)
        if remaining <= 0:
            return


def step_simulation(world: World, dt: float) -> list[Query]:
    """Advance every object by ``dt`` and return queries issued during the step."""
    world.time = round(world.time + dt, 9)
    now = world.time
    out = []
    index = world.index
    for obj in world.objects:
        advance(index, obj, dt)
        if now < obj.next_query:
            continue
        knn_k, profile, gamma = world.profiles.draw(obj.query_rng)
        poi_class = int(obj.query_rng.integers(world.n_classes))
        obj.next_query = now + gamma
        seg = index.segments[obj.segment_id]
        off = min(seg.length, round(obj.offset / OFFSET_QUANTUM) * OFFSET_QUANTUM)
        eid, eoff = index.segment_point(obj.segment_id, off)
        out.append(
            Query(
                query_id=query_hash(obj.object_id, now),
                user_id=obj.object_id,
                time=now,
                segment_id=obj.segment_id,
                offset=index.segment_offset(eid, eoff),
                knn_k=knn_k,
                profile=profile,
                edge_id=eid,
                edge_offset=eoff,
                poi_class=poi_class,
            )
        )
    return out
