"""Command-line front end: build, simulate, attack, report."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

from . import __version__
from .bundle import BundleError, build_bundle, save_bundle
from .config import ALGORITHMS, ConfigError, RunConfig, load_config, to_ini
from .network import NetworkError, write_network

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3

log = logging.getLogger("starcloak")


class DataError(Exception):
    pass


# -- helpers -----------------------------------------------------------------------


def _algorithms(raw: str | None, cfg: RunConfig) -> list[str]:
    if not raw:
        return [cfg.algorithm]
    names = [a.strip() for a in raw.split(",") if a.strip()]
    for a in names:
        if a not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {a!r}; choose from {', '.join(ALGORITHMS)}")
    return names


def _parse_sweep(raw: str) -> tuple[str, list[str]]:
    if "=" not in raw:
        raise ConfigError(f"sweep must look like PARAM=v1,v2,...; got {raw!r}")
    name, values = raw.split("=", 1)
    vals = [v.strip() for v in values.split(",") if v.strip()]
    if not vals:
        raise ConfigError("sweep value list is empty")
    return name.strip(), vals


def resolve_config(args: argparse.Namespace) -> RunConfig:
    overrides: dict = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    algs = getattr(args, "algorithm", None)
    if algs and "," not in algs:
        overrides["algorithm"] = algs
    if getattr(args, "sweep", None):
        name, vals = _parse_sweep(args.sweep)
        overrides["sweep_param"] = name
        overrides["sweep_values"] = vals
    return load_config(args.config, **overrides)


def write_manifest(out: Path, command: str, cfg: RunConfig, argv: Sequence[str], extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "argv": list(argv),
        "config_hash": cfg.digest(),
        "seed": cfg.seed,
        "version": __version__,
        "config": to_ini(cfg),
    }
    manifest.update(extra or {})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_csv(path: Path, rows: list[dict], fields: list[str] | None = None) -> None:
    fields = fields or (list(rows[0]) if rows else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow(r)


def _point_label(cfg: RunConfig, param: str) -> str:
    return f"{param}={getattr(cfg, param)}" if param else "default"


# -- commands ----------------------------------------------------------------------------


def cmd_build(args: argparse.Namespace) -> int:
    from .sim import prepare_inputs
    from .sim.lbs import write_pois

    cfg = resolve_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    index, store = prepare_inputs(cfg.with_overrides(bundle_path=""))
    bundle = build_bundle(index.network)
    save_bundle(bundle, out / "index.bundle")
    if not cfg.nodes_path:
        write_network(index.network, out / "nodes.txt", out / "edges.txt")
    if not cfg.poi_path:
        write_pois(out / "pois.txt", store, index)
    stats = {
        "nodes": len(index.network.nodes),
        "edges": len(index.network.edges),
        "segments": len(bundle.index.segments),
        "stars": len(bundle.index.stars),
    }
    write_manifest(out, "build", cfg, sys.argv, {"stats": stats})
    print(json.dumps(stats, sort_keys=True))
    return EXIT_OK


def _simulate_point(job: tuple[RunConfig, str]) -> tuple[dict, list[str]]:
    from .sim import prepare_inputs
    from .sim.runner import run_simulation

    cfg, label = job
    index, store = prepare_inputs(cfg)
    result = run_simulation(cfg, index, store)
    return result.metrics.as_row(), result.log_lines()


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    algs = _algorithms(args.algorithm, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    param = cfg.sweep_param
    jobs = []
    for alg in algs:
        for point in cfg.sweep_points():
            jobs.append((point.with_overrides(algorithm=alg), _point_label(point, param)))
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_simulate_point, jobs))
    else:
        results = [_simulate_point(j) for j in jobs]
    rows = []
    for (point, label), (metrics, lines) in zip(jobs, results):
        d = out / point.algorithm / label
        d.mkdir(parents=True, exist_ok=True)
        (d / "events.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
        (d / "config.ini").write_text(to_ini(point), encoding="utf-8")
        row = {"algorithm": point.algorithm, "sweep_param": param, "sweep_value": getattr(point, param) if param else ""}
        row.update(metrics)
        rows.append(row)
        _write_csv(d / "metrics.csv", [row])
    _write_csv(out / "metrics.csv", rows)
    write_manifest(out, "simulate", cfg, sys.argv, {"algorithms": algs})
    return EXIT_OK


def _load_run(d: Path):
    from .config import from_ini
    from .sim.metrics import MetricsRecord
    from .sim.runner import RunResult

    cfg = from_ini((d / "config.ini").read_text(encoding="utf-8"))
    events = []
    with open(d / "events.jsonl", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    events.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise DataError(f"{d / 'events.jsonl'}:{lineno}: {exc}") from None
    return RunResult(cfg, events, MetricsRecord())


def cmd_attack(args: argparse.Namespace) -> int:
    from .sim import prepare_inputs
    from .sim.attack_eval import REPORT_FIELDS, evaluate_run

    logs = Path(args.logs)
    runs = sorted(p.parent for p in logs.rglob("events.jsonl"))
    if not runs:
        raise DataError(f"no event logs under {logs}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    base = resolve_config(args)
    injections = [int(x) for x in args.injections.split(",")] if args.injections else None
    rows = []
    for d in runs:
        if not (d / "config.ini").exists():
            log.warning("skipping %s: no config.ini next to the log", d)
            continue
        result = _load_run(d)
        cfg = result.config
        index, _ = prepare_inputs(cfg)
        regions = [e for e in result.events if e["type"] == "region"]
        bad = [e for e in regions if not e.get("segments")]
        for e in bad:
            log.warning("%s: region %s has no geometry, skipped", d, e.get("id"))
        result.events = [e for e in result.events if not (e["type"] == "region" and not e.get("segments"))]
        for r in evaluate_run(result, index, injections, args.max_regions or base.max_regions):
            row = r.as_row()
            row["run"] = str(d.relative_to(logs))
            rows.append(row)
    _write_csv(out / "attack.csv", rows, ["run", *REPORT_FIELDS])
    summary: dict[tuple[str, int], list[float]] = {}
    for r in rows:
        summary.setdefault((r["algorithm"], r["injections"]), []).append(r["normalized_entropy"])
    srows = [
        {"algorithm": a, "injections": j, "regions": len(v), "mean_normalized_entropy": sum(v) / len(v)}
        for (a, j), v in sorted(summary.items())
    ]
    _write_csv(out / "attack_summary.csv", srows, ["algorithm", "injections", "regions", "mean_normalized_entropy"])
    write_manifest(out, "attack", base, sys.argv)
    return EXIT_OK


REPORT_METRICS = ("success_rate", "anonymization_time", "processing_ms", "candidate_size", "throughput")


def cmd_report(args: argparse.Namespace) -> int:
    src = Path(args.metrics)
    path = src / "metrics.csv" if src.is_dir() else src
    if not path.exists():
        raise DataError(f"no metrics file at {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DataError(f"{path} holds no metrics rows")
    params = {r["sweep_param"] for r in rows}
    if len(params) > 1:
        raise DataError(f"mismatched sweep axes in {path}: {sorted(params)}")
    algs = sorted({r["algorithm"] for r in rows}, key=ALGORITHMS.index)
    axes = {a: [r["sweep_value"] for r in rows if r["algorithm"] == a] for a in algs}
    first = axes[algs[0]]
    for a in algs[1:]:
        if axes[a] != first:
            raise DataError(f"algorithm {a} was swept over {axes[a]}, others over {first}")
    param = params.pop() or "point"
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for metric in REPORT_METRICS:
        table = []
        for i, value in enumerate(first):
            row = {param: value}
            for a in algs:
                row[a] = [r for r in rows if r["algorithm"] == a][i][metric]
            table.append(row)
        _write_csv(out / f"{metric}.csv", table, [param, *algs])
    cfg = load_config(args.config) if args.config else RunConfig()
    write_manifest(out, "report", cfg, sys.argv, {"source": str(path)})
    return EXIT_OK


# -- entry point ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="starcloak", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp: argparse.ArgumentParser, algorithm: bool = True) -> None:
        sp.add_argument("--config", help="INI run configuration")
        sp.add_argument("--seed", type=int)
        if algorithm:
            sp.add_argument("--algorithm", help=f"one or more of {','.join(ALGORITHMS)}, comma separated")
            sp.add_argument("--sweep", help="PARAM=v1,v2,...")
        sp.add_argument("--out", required=True, help="output directory")

    b = sub.add_parser("build", help="build and persist the network index bundle")
    common(b, algorithm=False)
    b.set_defaults(func=cmd_build)

    s = sub.add_parser("simulate", help="run simulations for each algorithm and sweep point")
    common(s)
    s.add_argument("--jobs", type=int, default=1, help="worker processes for sweep points")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("attack", help="evaluate linkability and entropy of logged regions")
    common(a)
    a.add_argument("--logs", required=True, help="simulate output directory")
    a.add_argument("--injections", help="comma-separated injection counts, e.g. 0,1,2,3,4")
    a.add_argument("--max-regions", type=int, default=None)
    a.set_defaults(func=cmd_attack)

    r = sub.add_parser("report", help="tabulate metrics per sweep value and algorithm")
    r.add_argument("--config")
    r.add_argument("--metrics", required=True, help="simulate output directory or metrics.csv")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NetworkError, BundleError, DataError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
