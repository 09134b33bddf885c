"""Command-line entry points.

Subcommands: ``plan`` (mesh/cloud -> deployment plan), ``simulate``
(plan + config -> event log and metric series), ``analyze`` (metric
series -> joined long-format CSV and summary stats), and
``estimate-error`` (analytical Hausdorff estimate for a sensor error).

Exit codes: 0 success, 1 runtime failure, 2 usage/validation error.
Every output directory receives exactly one run manifest.
"""

from __future__ import annotations

import argparse
import datetime
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import PlanError, PointCloud, SensorSpec, plan_from_json, plan_to_json
from .engine import SimConfig, run_simulation
from .mesh import MeshError, density_bounds, parse_obj, sample_surface
from .metrics import MetricSample, estimate_hd, series_from_csv
from .planner import plan as run_planner

log = logging.getLogger("swarical")


def _setup_logging() -> None:
    level = os.environ.get("SWARICAL_LOG", "info").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(levelname)s %(message)s")


def _write_manifest(out_dir: Path, command: str, seed, inputs: dict, outputs: list) -> None:
    manifest = {
        "command": command,
        "inputs": inputs,
        "outputs": outputs,
        "seed": seed,
        "version": f"swarical-{__version__}",
        "started_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")


def cmd_plan(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = SensorSpec(
        t_min=args.tmin, t_max=args.tmax, radius_r=args.radius,
        fov_half_angle=args.fov_half_angle,
    )
    if args.mesh:
        mesh = parse_obj(Path(args.mesh).read_bytes())
        if mesh.dropped_degenerate:
            log.warning("dropped %d degenerate faces", mesh.dropped_degenerate)
        bounds = density_bounds(spec, mesh.total_area)
        n = args.count if args.count else bounds.n_max
        n = min(max(n, bounds.n_min), bounds.n_max)
        log.info("mesh area %.1f mm^2, FLS count window [%d, %d], using %d",
                 mesh.total_area, bounds.n_min, bounds.n_max, n)
        cloud = sample_surface(mesh, n, seed=args.seed)
    else:
        cloud = PointCloud.from_csv(Path(args.cloud).read_text())
    deployment, summary = run_planner(cloud, args.g, spec, seed=args.seed)
    (out_dir / "plan.json").write_text(plan_to_json(deployment))
    (out_dir / "cloud.csv").write_text(cloud.to_csv())
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    _write_manifest(out_dir, "plan", args.seed,
                    {"mesh": args.mesh, "cloud": args.cloud, "g": args.g},
                    ["plan.json", "cloud.csv", "summary.json"])
    mc = summary["mount_counts"]
    total = sum(mc.values())
    print(f"f={summary['f']} swarms={summary['n_swarms']} dark={summary['dark_count']}")
    print("mounts: " + ", ".join(f"{k}={v} ({v / total:.1%})" for k, v in mc.items()))
    return 0


def cmd_simulate(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    deployment = plan_from_json(Path(args.plan).read_text())
    config = SimConfig.from_json(Path(args.config).read_text())
    engine = run_simulation(deployment, config)
    (out_dir / "metrics.csv").write_text(engine.recorder.to_csv())
    (out_dir / "events.jsonl").write_text(engine.log_jsonl())
    _write_manifest(out_dir, "simulate", config.seed,
                    {"plan": args.plan, "config": args.config},
                    ["metrics.csv", "events.jsonl"])
    last = engine.recorder.samples[-1]
    print(f"technique={config.technique} final hd={last.hd_mm:.3f} mm "
          f"cd={last.cd_mm2:.3f} mm^2 distance={last.total_distance_mm:.0f} mm")
    return 0


def _series_summary(label: str, samples: list[MetricSample], threshold: float | None):
    last = samples[-1]
    out = {
        "label": label,
        "final_hd_mm": last.hd_mm,
        "final_cd_mm2": last.cd_mm2,
        "total_distance_mm": last.total_distance_mm,
        "moves": last.moves_count,
    }
    if threshold is not None:
        hit = next((s.t_ms for s in samples if s.hd_mm <= threshold), None)
        out["time_to_threshold_ms"] = hit if hit is not None else "not reached"
    return out


def cmd_analyze(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = ["label,t_ms,hd_mm,cd_mm2,total_distance_mm,moves"]
    summaries = []
    for path in args.series:
        label = Path(path).parent.name or Path(path).stem
        samples = series_from_csv(Path(path).read_text())
        for s in samples:
            rows.append(f"{label},{s.t_ms!r},{s.hd_mm!r},{s.cd_mm2!r},"
                        f"{s.total_distance_mm!r},{s.moves_count}")
        summaries.append(_series_summary(label, samples, args.hd_threshold))
    (out_dir / "combined.csv").write_text("\n".join(rows) + "\n")
    (out_dir / "summary.json").write_text(json.dumps(summaries, indent=1) + "\n")
    _write_manifest(out_dir, "analyze", None, {"series": list(args.series)},
                    ["combined.csv", "summary.json"])
    for s in summaries:
        print(json.dumps(s))
    return 0


def cmd_estimate_error(args) -> int:
    deployment = plan_from_json(Path(args.plan).read_text())
    cloud = PointCloud(deployment.coordinates())
    hd = estimate_hd(cloud, args.epsilon_pct)
    print(json.dumps({"epsilon_pct": args.epsilon_pct, "estimated_hd_mm": hd}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="swarical", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    pp = sub.add_parser("plan", help="build a deployment plan from a mesh or cloud")
    src = pp.add_mutually_exclusive_group(required=True)
    src.add_argument("--mesh", help="Wavefront OBJ input")
    src.add_argument("--cloud", help="point-cloud CSV input (id,x,y,z,nx,ny,nz)")
    pp.add_argument("--g", type=int, required=True, help="target swarm size")
    pp.add_argument("--tmin", type=float, required=True, help="min sensing range, mm")
    pp.add_argument("--tmax", type=float, required=True, help="max sensing range, mm")
    pp.add_argument("--radius", type=float, required=True, help="FLS body radius, mm")
    pp.add_argument("--fov-half-angle", type=float, default=60.0)
    pp.add_argument("--count", type=int, default=0,
                    help="FLS count (meshes only; clamped to the density window)")
    pp.add_argument("--seed", type=int, default=0)
    pp.add_argument("--out", required=True)
    pp.set_defaults(fn=cmd_plan)

    ps = sub.add_parser("simulate", help="run a localization technique over a plan")
    ps.add_argument("--plan", required=True)
    ps.add_argument("--config", required=True)
    ps.add_argument("--out", required=True)
    ps.set_defaults(fn=cmd_simulate)

    pa = sub.add_parser("analyze", help="join metric series and summarize")
    pa.add_argument("--series", nargs="+", required=True)
    pa.add_argument("--hd-threshold", type=float, default=None,
                    help="report time to reach this HD, mm")
    pa.add_argument("--out", required=True)
    pa.set_defaults(fn=cmd_analyze)

    pe = sub.add_parser("estimate-error",
                        help="analytical HD estimate for a sensor error percentage")
    pe.add_argument("--plan", required=True)
    pe.add_argument("--epsilon-pct", type=float, required=True)
    pe.set_defaults(fn=cmd_estimate_error)
    return p


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (PlanError, MeshError, FileNotFoundError, KeyError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - runtime failure boundary
        log.exception("runtime failure")
        print(f"runtime failure: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
