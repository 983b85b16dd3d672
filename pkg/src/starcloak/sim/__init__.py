"""Desk-scale simulation: synthetic inputs, mobility, mock LBS, metrics and the run loop."""

from __future__ import annotations

from ..config import RunConfig
from ..network import NetworkIndex, load_network
from .lbs import PoiStore, read_pois
from .synthetic import grid_network, random_pois


def prepare_inputs(cfg: RunConfig) -> tuple[NetworkIndex, PoiStore]:
    """Network index and POI store from the configured files, or a seeded synthetic grid."""
    if cfg.bundle_path:
        from ..bundle import load_bundle

        index = load_bundle(cfg.bundle_path).index
        network = index.network
        if index.radius_unit != cfg.radius_unit:
            index = NetworkIndex(network, cfg.radius_unit)
    else:
        if cfg.nodes_path:
            network = load_network(cfg.nodes_path, cfg.edges_path)
        else:
            network = grid_network(
                cfg.grid_nx, cfg.grid_ny, cfg.grid_spacing, cfg.grid_drop, cfg.grid_split, cfg.seed
            )
        index = NetworkIndex(network, cfg.radius_unit)
    if cfg.poi_path:
        store = read_pois(cfg.poi_path, index)
    else:
        store = random_pois(network, cfg.n_pois, cfg.n_classes, cfg.seed)
    return index, store


__all__ = ["prepare_inputs"]
