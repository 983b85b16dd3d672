"""Uniform-grid spatial index for snapping points onto the nearest road edge."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .network import METERS_PER_DEGREE, NetworkIndex, project


class OutOfCoverage(ValueError):
    """Point lies outside the indexed area plus margin."""


@dataclass(frozen=True)
class Location:
    segment_id: int
    offset: float
    edge_id: int
    edge_offset: float
    distance: float = 0.0


def point_segment_distance(px, py, ax, ay, bx, by) -> tuple[float, float]:
    """Distance from P to segment AB and the clamped projection fraction along AB."""
    dx, dy = bx - ax, by - ay
    denom = dx * dx + dy * dy
    if denom == 0.0:
        t = 0.0
    else:
        t = ((px - ax) * dx + (py - ay) * dy) / denom
        t = 0.0 if t < 0.0 else 1.0 if t > 1.0 else t
    cx, cy = ax + t * dx, ay + t * dy
    return math.hypot(px - cx, py - cy), t


class GridIndex:
    """Edges bucketed into square cells of ``cell_size`` metres over the projected bounding box."""

    def __init__(self, index: NetworkIndex, cell_size: float = 500.0, margin: float = 1000.0) -> None:
        self.index = index
        net = index.network
        self.cell_size = float(cell_size)
        self.margin = float(margin)
        min_lon, min_lat, max_lon, max_lat = net.bounds()
        self.lat0 = (min_lat + max_lat) / 2
        self.xy = {n: project(lon, lat, self.lat0) for n, (lon, lat) in net.nodes.items()}
        xs = [p[0] for p in self.xy.values()]
        ys = [p[1] for p in self.xy.values()]
        self.min_x, self.min_y = min(xs), min(ys)
        self.max_x, self.max_y = max(xs), max(ys)
        self.cells: dict[tuple[int, int], list[int]] = {}
        for eid in sorted(net.edges):
            e = net.edges[eid]
            (ax, ay), (bx, by) = self.xy[e.a], self.xy[e.b]
            c0 = self._cell(min(ax, bx), min(ay, by))
            c1 = self._cell(max(ax, bx), max(ay, by))
            for i in range(c0[0], c1[0] + 1):
                for j in range(c0[1], c1[1] + 1):
                    self.cells.setdefault((i, j), []).append(eid)
        self.n_cols = self._cell(self.max_x, self.max_y)[0] + 1
        self.n_rows = self._cell(self.max_x, self.max_y)[1] + 1

    def _cell(self, x: float, y: float) -> tuple[int, int]:
        return int(math.floor((x - self.min_x) / self.cell_size)), int(
            math.floor((y - self.min_y) / self.cell_size)
        )

    def to_xy(self, lon: float, lat: float) -> tuple[float, float]:
        return project(lon, lat, self.lat0)

    def to_lonlat(self, x: float, y: float) -> tuple[float, float]:
        return x / (METERS_PER_DEGREE * math.cos(math.radians(self.lat0))), y / METERS_PER_DEGREE

    def covers(self, x: float, y: float) -> bool:
        m = self.margin
        return self.min_x - m <= x <= self.max_x + m and self.min_y - m <= y <= self.max_y + m

    def edge_distance(self, eid: int, x: float, y: float) -> tuple[float, float]:
        e = self.index.network.edges[eid]
        (ax, ay), (bx, by) = self.xy[e.a], self.xy[e.b]
        return point_segment_distance(x, y, ax, ay, bx, by)

    def nearest_edge(self, x: float, y: float) -> tuple[int, float, float]:
        """Return (edge_id, distance, fraction) of the closest edge; ties go to the lower edge id."""
        ci, cj = self._cell(x, y)
        best: tuple[float, int, float] | None = None
        ring = 0
        max_ring = max(self.n_cols, self.n_rows) + abs(ci) + abs(cj) + 2
        seen: set[int] = set()
        while ring <= max_ring:
            for i in range(ci - ring, ci + ring + 1):
                for j in range(cj - ring, cj + ring + 1):
                    if max(abs(i - ci), abs(j - cj)) != ring:
                        continue
                    for eid in self.cells.get((i, j), ()):
                        if eid in seen:
                            continue
                        seen.add(eid)
                        d, t = self.edge_distance(eid, x, y)
                        if best is None or (d, eid) < (best[0], best[1]):
                            best = (d, eid, t)
            # anything in an outer ring is at least ring * cell_size away
            if best is not None and best[0] < ring * self.cell_size:
                break
            ring += 1
        if best is None:
            raise OutOfCoverage("index holds no edges")
        return best[1], best[0], best[2]

    def locate_xy(self, x: float, y: float) -> Location:
        if not self.covers(x, y):
            raise OutOfCoverage(f"point ({x:.1f}, {y:.1f}) m lies outside the covered area")
        eid, dist, t = self.nearest_edge(x, y)
        e = self.index.network.edges[eid]
        edge_offset = t * e.length
        return Location(
            self.index.edge_segment[eid],
            self.index.segment_offset(eid, edge_offset),
            eid,
            edge_offset,
            dist,
        )

    def point_on_edge(self, eid: int, edge_offset: float) -> tuple[float, float]:
        e = self.index.network.edges[eid]
        (ax, ay), (bx, by) = self.xy[e.a], self.xy[e.b]
        t = 0.0 if e.length == 0 else min(max(edge_offset / e.length, 0.0), 1.0)
        return ax + t * (bx - ax), ay + t * (by - ay)


def locate(spatial_index: GridIndex, point: tuple[float, float]) -> Location:
    """Snap a (longitude, latitude) point to its nearest segment and offset along it."""
    x, y = spatial_index.to_xy(*point)
    return spatial_index.locate_xy(x, y)


def lonlat_on_edge(spatial_index: GridIndex, eid: int, edge_offset: float) -> tuple[float, float]:
    return spatial_index.to_lonlat(*spatial_index.point_on_edge(eid, edge_offset))
