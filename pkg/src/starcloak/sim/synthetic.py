"""Seeded synthetic road networks and POI layouts for desk-scale experiments."""

from __future__ import annotations

import math

import numpy as np

from ..network import METERS_PER_DEGREE, Edge, RoadNetwork

LAT0 = 37.0


def _to_lonlat(x: float, y: float) -> tuple[float, float]:
    return x / (METERS_PER_DEGREE * math.cos(math.radians(LAT0))), LAT0 + y / METERS_PER_DEGREE


def grid_network(
    nx: int,
    ny: int,
    spacing: float = 150.0,
    drop: float = 0.25,
    split: float = 0.2,
    seed: int = 0,
) -> RoadNetwork:
    """Perturbed grid: a random spanning tree plus a ``1 - drop`` share of the other grid edges.

    A ``split`` share of the surviving edges gets a degree-2 midpoint so
    segments span several edges.  Lengths are whole metres so network
    distances add up exactly in floating point.
    """
    rng = np.random.default_rng([seed, 0x6121D])
    coords: dict[int, tuple[float, float]] = {}
    xy: dict[int, tuple[float, float]] = {}
    for j in range(ny):
        for i in range(nx):
            n = j * nx + i
            x = i * spacing + rng.uniform(-0.2, 0.2) * spacing
            y = j * spacing + rng.uniform(-0.2, 0.2) * spacing
            xy[n] = (x, y)
            coords[n] = _to_lonlat(x, y)
    pairs = []
    for j in range(ny):
        for i in range(nx):
            n = j * nx + i
            if i + 1 < nx:
                pairs.append((n, n + 1))
            if j + 1 < ny:
                pairs.append((n, n + nx))
    order = rng.permutation(len(pairs))
    parent = list(range(nx * ny))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    keep: list[tuple[int, int]] = []
    extra: list[tuple[int, int]] = []
    for idx in order:
        a, b = pairs[idx]
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            keep.append((a, b))
        else:
            extra.append((a, b))
    keep += [p for p in extra if rng.random() >= drop]
    keep.sort()

    edges: list[Edge] = []
    next_node = nx * ny

    def length(p: tuple[float, float], q: tuple[float, float]) -> float:
        return float(max(1, round(math.hypot(p[0] - q[0], p[1] - q[1]))))

    for a, b in keep:
        if rng.random() < split:
            m = next_node
            next_node += 1
            xy[m] = ((xy[a][0] + xy[b][0]) / 2, (xy[a][1] + xy[b][1]) / 2)
            coords[m] = _to_lonlat(*xy[m])
            edges.append(Edge(len(edges), a, m, length(xy[a], xy[m])))
            edges.append(Edge(len(edges), m, b, length(xy[m], xy[b])))
        else:
            edges.append(Edge(len(edges), a, b, length(xy[a], xy[b])))
    return RoadNetwork(coords, edges)


def random_pois(network: RoadNetwork, count: int, n_classes: int = 1, seed: int = 0):
    """``count`` POIs on length-weighted random edges at whole-metre offsets."""
    from .lbs import Poi, PoiStore

    rng = np.random.default_rng([seed, 0x9015])
    eids = sorted(network.edges)
    lengths = np.array([network.edges[e].length for e in eids])
    picks = rng.choice(len(eids), size=count, p=lengths / lengths.sum())
    pois = []
    for i, k in enumerate(picks):
        e = network.edges[eids[k]]
        off = float(rng.integers(0, int(e.length) + 1))
        pois.append(Poi(i, e.edge_id, off, int(rng.integers(n_classes))))
    return PoiStore(network, pois)
