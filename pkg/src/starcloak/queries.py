"""Query intake: profiles, pre-processing, the FIFO query queue and the expiration heap."""

from __future__ import annotations

import csv
import hashlib
import heapq
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .spatial import GridIndex, Location, OutOfCoverage, locate


class QueryRejected(ValueError):
    def __init__(self, reason: str) -> None:
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class QueryProfile:
    delta_k: int = 1
    delta_l: int = 1
    sigma_s: float = 1
    sigma_t: float = 10.0

    def __post_init__(self) -> None:
        if self.delta_k < 1 or self.delta_l < 1:
            raise ValueError("delta_k and delta_l must be at least 1")
        if self.sigma_s < 0:
            raise ValueError("sigma_s must be non-negative")
        if self.sigma_t <= 0:
            raise ValueError("sigma_t must be positive")


@dataclass(frozen=True)
class Query:
    query_id: str
    user_id: int
    time: float
    segment_id: int
    offset: float
    knn_k: int
    profile: QueryProfile
    edge_id: int = -1
    edge_offset: float = 0.0
    poi_class: int | None = None

    @property
    def t_exp(self) -> float:
        return self.time + self.profile.sigma_t


@dataclass(frozen=True)
class RawQuery:
    user_id: int
    time: float
    lon: float
    lat: float
    knn_k: int
    profile: QueryProfile
    poi_class: int | None = None


def query_hash(user_id: object, time: float) -> str:
    """Deterministic 64-bit digest of user id and issue time."""
    payload = f"{user_id}|{time:.6f}".encode()
    return hashlib.blake2b(payload, digest_size=8).hexdigest()


class QueryQueue:
    """FIFO of pending queries with O(1) removal of arbitrary entries."""

    def __init__(self) -> None:
        self._items: OrderedDict[str, Query] = OrderedDict()

    def push(self, q: Query) -> None:
        if q.query_id in self._items:
            raise QueryRejected(f"duplicate query {q.query_id}")
        self._items[q.query_id] = q

    def pop(self) -> Query:
        return self._items.popitem(last=False)[1]

    def peek(self) -> Query | None:
        return next(iter(self._items.values()), None)

    def remove(self, query_id: str) -> bool:
        return self._items.pop(query_id, None) is not None

    def __contains__(self, query_id: str) -> bool:
        return query_id in self._items

    def __len__(self) -> int:
        return len(self._items)

    def __bool__(self) -> bool:
        return bool(self._items)

    def __iter__(self) -> Iterator[Query]:
        return iter(list(self._items.values()))


class ExpirationHeap:
    """Min-heap on expiration time with lazy deletion.

    Ties on ``t_exp`` resolve by insertion order.
    """

    def __init__(self) -> None:
        self._heap: list[tuple[float, int, str]] = []
        self._live: dict[str, Query] = {}
        self._seq = 0

    def push(self, q: Query) -> None:
        if q.query_id in self._live:
            raise QueryRejected(f"duplicate query {q.query_id}")
        self._live[q.query_id] = q
        heapq.heappush(self._heap, (q.t_exp, self._seq, q.query_id))
        self._seq += 1

    def discard(self, query_id: str) -> bool:
        return self._live.pop(query_id, None) is not None

    def _prune_top(self) -> None:
        while self._heap and self._heap[0][2] not in self._live:
            heapq.heappop(self._heap)

    def peek(self) -> Query | None:
        self._prune_top()
        return self._live[self._heap[0][2]] if self._heap else None

    def pop(self) -> Query:
        self._prune_top()
        _, _, qid = heapq.heappop(self._heap)
        return self._live.pop(qid)

    def __contains__(self, query_id: str) -> bool:
        return query_id in self._live

    def __len__(self) -> int:
        return len(self._live)

    def live_ids(self) -> list[str]:
        return list(self._live)

    def within(self, horizon: float) -> list[Query]:
        """Live queries with ``t_exp <= horizon`` in ascending expiration order."""
        return sorted(
            (q for q in self._live.values() if q.t_exp <= horizon),
            key=lambda q: q.t_exp,
        )


def pop_expired(heap: ExpirationHeap, now: float) -> list[Query]:
    out = []
    while True:
        top = heap.peek()
        if top is None or top.t_exp > now:
            return out
        out.append(heap.pop())


def make_query(raw: RawQuery, loc: Location) -> Query:
    return Query(
        query_id=query_hash(raw.user_id, raw.time),
        user_id=raw.user_id,
        time=raw.time,
        segment_id=loc.segment_id,
        offset=loc.offset,
        knn_k=raw.knn_k,
        profile=raw.profile,
        edge_id=loc.edge_id,
        edge_offset=loc.edge_offset,
        poi_class=raw.poi_class,
    )


def preprocess(raw: RawQuery, index: GridIndex, queue: QueryQueue, heap: ExpirationHeap) -> Query:
    """Hash, locate, enqueue and register a raw query for expiration."""
    try:
        loc = locate(index, (raw.lon, raw.lat))
    except OutOfCoverage as exc:
        raise QueryRejected(f"out of coverage: {exc}") from None
    q = make_query(raw, loc)
    if q.query_id in heap or q.query_id in queue:
        raise QueryRejected(f"duplicate (user, time) pair {raw.user_id}@{raw.time}")
    queue.push(q)
    heap.push(q)
    return q


@dataclass
class ProfileDistribution:
    """Gaussian means and deviations for per-query parameters, clipped to valid ranges."""

    knn_k: tuple[float, float] = (5, 1)
    delta_k: tuple[float, float] = (5, 1.5)
    delta_l: tuple[float, float] = (5, 1.5)
    sigma_s: tuple[float, float] = (4, 1)
    sigma_t: tuple[float, float] = (10, 2)
    gamma: tuple[float, float] = (20, 2)

    @staticmethod
    def _int(mean: float, sd: float, z: float) -> int:
        return max(1, int(round(mean + sd * z)))

    def draw(self, rng) -> tuple[int, QueryProfile, float]:
        """Draw (knn_k, profile, waiting time).

        Six standard normals are consumed on every call, whatever the
        parameters, so runs that differ only in means share their noise.
        """
        z = rng.standard_normal(6)
        knn_k = self._int(*self.knn_k, z[0])
        profile = QueryProfile(
            delta_k=self._int(*self.delta_k, z[1]),
            delta_l=self._int(*self.delta_l, z[2]),
            sigma_s=self._int(*self.sigma_s, z[3]),
            sigma_t=max(0.1, self.sigma_t[0] + self.sigma_t[1] * z[4]),
        )
        gamma = max(0.1, self.gamma[0] + self.gamma[1] * z[5])
        return knn_k, profile, gamma


def read_trace(path: str | Path) -> list[RawQuery]:
    """Read a replay trace ``user_id,time,lon,lat,knn_k,delta_k,delta_l,sigma_s,sigma_t``."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(
                RawQuery(
                    user_id=int(row["user_id"]),
                    time=float(row["time"]),
                    lon=float(row["lon"]),
                    lat=float(row["lat"]),
                    knn_k=int(row["knn_k"]),
                    profile=QueryProfile(
                        int(row["delta_k"]),
                        int(row["delta_l"]),
                        float(row["sigma_s"]),
                        float(row["sigma_t"]),
                    ),
                )
            )
    return out


TRACE_FIELDS = ["user_id", "time", "lon", "lat", "knn_k", "delta_k", "delta_l", "sigma_s", "sigma_t"]


def write_trace(path: str | Path, raws: Iterable[RawQuery]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_FIELDS)
        for r in raws:
            p = r.profile
            w.writerow([r.user_id, r.time, r.lon, r.lat, r.knn_k, p.delta_k, p.delta_l, p.sigma_s, p.sigma_t])
