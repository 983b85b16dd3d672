"""Binary index bundle: magic header, format version, pickled network structures."""

from __future__ import annotations

import pickle
import struct
from dataclasses import dataclass
from pathlib import Path

from .network import NetworkError, NetworkIndex, RoadNetwork
from .spatial import GridIndex

MAGIC = b"STARCLK\x00"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sH")


class BundleError(NetworkError):
    pass


@dataclass
class Bundle:
    index: NetworkIndex
    grid: GridIndex

    @property
    def network(self) -> RoadNetwork:
        return self.index.network


def build_bundle(network: RoadNetwork, cell_size: float = 500.0) -> Bundle:
    index = NetworkIndex(network)
    return Bundle(index, GridIndex(index, cell_size))


def save_bundle(bundle: Bundle, path: str | Path) -> None:
    payload = pickle.dumps({"index": bundle.index, "grid": bundle.grid}, protocol=pickle.HIGHEST_PROTOCOL)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION))
        fh.write(payload)


def load_bundle(path: str | Path) -> Bundle:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise BundleError(f"cannot read bundle {path}: {exc}") from None
    if len(raw) < _HEADER.size:
        raise BundleError(f"{path}: truncated bundle header")
    magic, version = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BundleError(f"{path}: not an index bundle (bad magic)")
    if version != FORMAT_VERSION:
        raise BundleError(f"{path}: bundle format version {version}, expected {FORMAT_VERSION}")
    try:
        data = pickle.loads(raw[_HEADER.size :])
    except Exception as exc:  # any unpickling failure means a damaged file
        raise BundleError(f"{path}: damaged bundle payload: {exc}") from None
    return Bundle(data["index"], data["grid"])
