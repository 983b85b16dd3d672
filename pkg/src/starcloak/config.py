"""Run configuration: an INI file with typed fields, standard defaults and flag overrides."""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .cost import CostParams
from .queries import ProfileDistribution

ALGORITHMS = ("basic", "bounded", "hybrid", "random", "expansion")
ENGINE_MODES = ("basic", "bounded", "hybrid")
BASELINE_NAMES = {"random": "random-sampling", "expansion": "network-expansion"}


class ConfigError(ValueError):
    pass


def _f(section: str, default: Any = None, **kw):
    if isinstance(default, (list, tuple)):
        return field(default_factory=lambda: list(default), metadata={"section": section, **kw})
    return field(default=default, metadata={"section": section, **kw})


@dataclass
class RunConfig:
    # network
    nodes_path: str = _f("network", "")
    edges_path: str = _f("network", "")
    poi_path: str = _f("network", "")
    bundle_path: str = _f("network", "")
    grid_nx: int = _f("network", 20)
    grid_ny: int = _f("network", 20)
    grid_spacing: float = _f("network", 150.0)
    grid_drop: float = _f("network", 0.25)
    grid_split: float = _f("network", 0.2)
    n_pois: int = _f("network", 400)
    n_classes: int = _f("network", 1)
    radius_unit: str = _f("network", "hops")
    # simulation
    algorithm: str = _f("simulation", "basic")
    n_objects: int = _f("simulation", 200)
    duration: float = _f("simulation", 300.0)
    dt: float = _f("simulation", 0.1)
    fast_speed: float = _f("simulation", 20.0)
    slow_speed: float = _f("simulation", 8.0)
    fast_share: float = _f("simulation", 0.5)
    metric_sample: int = _f("simulation", 200)
    neighbor_rule: str = _f("simulation", "segments")
    comb_cap: int = _f("simulation", 256)
    prune_workers: int = _f("simulation", 0)
    baseline_retry: float = _f("simulation", 1.0)
    # per-query parameters: mean and deviation
    knn_k: float = _f("profile", 5.0)
    knn_k_sd: float = _f("profile", 1.0)
    delta_k: float = _f("profile", 5.0)
    delta_k_sd: float = _f("profile", 1.5)
    delta_l: float = _f("profile", 5.0)
    delta_l_sd: float = _f("profile", 1.5)
    sigma_s: float = _f("profile", 4.0)
    sigma_s_sd: float = _f("profile", 1.0)
    sigma_t: float = _f("profile", 10.0)
    sigma_t_sd: float = _f("profile", 2.0)
    gamma: float = _f("profile", 20.0)
    gamma_sd: float = _f("profile", 2.0)
    lam: float = _f("profile", 1.0)
    lam_sd: float = _f("profile", 0.0)
    alpha: float = _f("profile", 2.0)
    alpha_sd: float = _f("profile", 0.0)
    # cost
    c_s: float = _f("cost", 1.0)
    c_v: float = _f("cost", 2.0)
    c_o: float = _f("cost", 0.1)
    rho_o: float = _f("cost", 1.0)
    beta: float = _f("cost", 0.5)
    res_size: float = _f("cost", 5.0)
    # attack
    repetitions: int = _f("attack", 32)
    budget: int = _f("attack", 100_000)
    injections: list[int] = _f("attack", [0])
    max_regions: int = _f("attack", 50)
    # run
    seed: int = _f("run", 0)
    sweep_param: str = _f("run", "")
    sweep_values: list[float] = _f("run", [])

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        for name in ("knn_k", "delta_k", "delta_l", "sigma_s", "sigma_t", "gamma", "lam", "alpha"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} mean must be positive")
        for name in ("n_objects", "n_pois", "grid_nx", "grid_ny", "metric_sample", "repetitions", "budget"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.radius_unit not in ("hops", "meters"):
            raise ConfigError(f"radius_unit must be hops or meters, not {self.radius_unit!r}")
        if self.neighbor_rule not in ("segments", "stars"):
            raise ConfigError(f"neighbor_rule must be segments or stars, not {self.neighbor_rule!r}")
        if self.duration <= 0 or self.dt <= 0:
            raise ConfigError("duration and dt must be positive")
        if self.sweep_param:
            if self.sweep_param not in SWEEPABLE:
                raise ConfigError(f"parameter {self.sweep_param!r} cannot be swept")
            if not self.sweep_values:
                raise ConfigError("sweep value list is empty")
        if not self.injections:
            raise ConfigError("injection list is empty")
        try:
            self.cost_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    # -- derived objects ---------------------------------------------------------
    def profiles(self) -> ProfileDistribution:
        return ProfileDistribution(
            knn_k=(self.knn_k, self.knn_k_sd),
            delta_k=(self.delta_k, self.delta_k_sd),
            delta_l=(self.delta_l, self.delta_l_sd),
            sigma_s=(self.sigma_s, self.sigma_s_sd),
            sigma_t=(self.sigma_t, self.sigma_t_sd),
            gamma=(self.gamma, self.gamma_sd),
        )

    def cost_params(self) -> CostParams:
        return CostParams(self.c_s, self.c_v, self.c_o, self.rho_o, self.beta, self.res_size)

    def with_overrides(self, **kw: Any) -> "RunConfig":
        try:
            return dataclasses.replace(self, **kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def sweep_points(self) -> list["RunConfig"]:
        """One config per sweep value (just ``self`` without a sweep)."""
        if not self.sweep_param:
            return [self]
        kind = _FIELDS[self.sweep_param].type
        return [
            self.with_overrides(**{self.sweep_param: _coerce(kind, v), "sweep_param": "", "sweep_values": []})
            for v in self.sweep_values
        ]

    def digest(self) -> str:
        return hashlib.sha256(to_ini(self).encode()).hexdigest()[:16]


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
SWEEPABLE = tuple(
    name
    for name, f in _FIELDS.items()
    if f.metadata["section"] in ("profile", "cost", "simulation") and f.type in ("int", "float")
)


def _coerce(kind: str, raw: Any) -> Any:
    try:
        if kind == "int":
            return int(float(raw))
        if kind == "float":
            return float(raw)
        if kind == "str":
            return str(raw)
        if kind == "list[int]":
            return [int(x) for x in _split(raw)]
        if kind == "list[float]":
            return [float(x) for x in _split(raw)]
    except (TypeError, ValueError):
        raise ConfigError(f"cannot read {raw!r} as {kind}") from None
    raise ConfigError(f"unsupported field type {kind}")


def _split(raw: Any) -> list[str]:
    if isinstance(raw, (list, tuple)):
        return [str(x) for x in raw]
    return [x.strip() for x in str(raw).split(",") if x.strip()]


def _render(value: Any) -> str:
    if isinstance(value, list):
        return ",".join(repr(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def to_ini(cfg: RunConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    for f in dataclasses.fields(cfg):
        sec = f.metadata["section"]
        if not parser.has_section(sec):
            parser.add_section(sec)
        parser.set(sec, f.name, _render(getattr(cfg, f.name)))
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def from_ini(text: str, **overrides: Any) -> RunConfig:
    """Parse INI text; keyword ``overrides`` (already typed or strings) win over the file."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from None
    values: dict[str, Any] = {}
    for sec in parser.sections():
        for key, raw in parser.items(sec):
            f = _FIELDS.get(key)
            if f is None:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
            if f.metadata["section"] != sec:
                raise ConfigError(f"key {key!r} belongs in [{f.metadata['section']}], not [{sec}]")
            values[key] = _coerce(f.type, raw)
    for key, raw in overrides.items():
        f = _FIELDS.get(key)
        if f is None:
            raise ConfigError(f"unknown setting {key!r}")
        values[key] = _coerce(f.type, raw)
    return RunConfig(**values)


def load_config(path: str | Path | None, **overrides: Any) -> RunConfig:
    if path is None:
        return from_ini("", **overrides)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return from_ini(text, **overrides)


def save_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(to_ini(cfg), encoding="utf-8")


def config_json(cfg: RunConfig) -> str:
    return json.dumps(dataclasses.asdict(cfg), sort_keys=True)
