"""Command-line entry points tying the pipeline together.

Subcommands: ``simulate`` (scenario to scan log), ``slam`` (scan log to
submaps, trajectory, and merged map), ``merge`` (submap set to merged map),
``localize`` (merged map plus scan log to trajectory and timing), ``eval``
(two trajectories to RMSE), ``export`` (map file to PGM image). Usage errors
exit 2, runtime errors exit 1 with a one-line diagnostic.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

from .evaluate import TimingStats, evaluate_trajectory
from .geometry import IDENTITY, Pose2
from . import logio
from .matching import predict_pose
from .simulate import parse_scenario, rectangle_circuit, run_scenario
from .slam import SlamParams, run_slam
from .submaps import MergedMap, merge_submaps, pure_localize

BUILTIN_SCENARIOS = ("rectangle-circuit",)


def _add_map_flags(p: argparse.ArgumentParser):
    p.add_argument("--resolution", type=float, default=0.05, help="cell size, meters")
    p.add_argument("--truncation", type=float, default=0.06,
                   help="distance band half-width, meters")
    p.add_argument("--w-max", type=float, default=10.0, help="weight cap")
    p.add_argument("--max-expansions", type=int, default=None,
                   help="neighbor-ring budget (default: by resolution)")


def _add_match_flags(p: argparse.ArgumentParser):
    p.add_argument("--iters1", type=int, default=10, help="stage-1 iteration cap")
    p.add_argument("--iters2", type=int, default=20, help="stage-2 iteration cap")
    p.add_argument("--trim", type=float, default=None,
                   help="stage-2 trim threshold, meters (default: truncation)")
    p.add_argument("--huber-delta", type=float, default=None,
                   help="robust-loss threshold (default: w_max*truncation/3)")
    p.add_argument("--eps", type=float, default=1e-6,
                   help="relative cost-change convergence threshold")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sdfslam")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario and write a scan log")
    p.add_argument("--scenario", required=True,
                   help="config file path or builtin name "
                        f"({', '.join(BUILTIN_SCENARIOS)})")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--gt-out", type=Path, default=None,
                   help="also write the true trajectory")
    p.add_argument("--seed", type=int, default=None, help="override scenario seed")
    p.add_argument("--noise-sigma", type=float, default=None)
    p.add_argument("--outlier-rate", type=float, default=None)
    p.add_argument("--scans", type=int, default=400,
                   help="frame count for builtin scenarios")

    p = sub.add_parser("slam", help="build submaps and a merged map from a log")
    p.add_argument("--log", required=True, type=Path)
    p.add_argument("--out-dir", required=True, type=Path)
    _add_map_flags(p)
    _add_match_flags(p)
    p.add_argument("--submap-scans", type=int, default=50,
                   help="scans per submap before it is finished")
    p.add_argument("--submap-cells", type=int, default=100,
                   help="submap side length in cells")

    p = sub.add_parser("merge", help="merge a submap set into one map file")
    p.add_argument("--submaps", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("localize", help="localize a scan log against a merged map")
    p.add_argument("--map", required=True, type=Path)
    p.add_argument("--log", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--loc-iters", type=int, default=5,
                   help="iteration cap for both stages")
    p.add_argument("--init", type=float, nargs=3, metavar=("X", "Y", "THETA"),
                   default=None,
                   help="initial pose (default: first record's gt, else identity)")
    _add_match_flags(p)

    p = sub.add_parser("eval", help="RMSE between two trajectory files")
    p.add_argument("--est", required=True, type=Path)
    p.add_argument("--gt", required=True, type=Path)

    p = sub.add_parser("export", help="write a map file as a PGM image")
    p.add_argument("--map", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    return ap


def cmd_simulate(args) -> int:
    if args.scenario == "rectangle-circuit":
        world, script, model, rate = rectangle_circuit(
            noise_sigma=args.noise_sigma if args.noise_sigma is not None else 0.005,
            outlier_rate=args.outlier_rate if args.outlier_rate is not None else 0.0,
            seed=args.seed if args.seed is not None else 7,
            scans=args.scans,
        )
    else:
        world, script, model, rate = parse_scenario(args.scenario)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.noise_sigma is not None:
            overrides["noise_sigma"] = args.noise_sigma
        if args.outlier_rate is not None:
            overrides["outlier_rate"] = args.outlier_rate
        if overrides:
            from dataclasses import replace

            model = replace(model, **overrides)
    records = run_scenario(world, script, model, rate)
    logio.write_scan_log(records, args.out)
    if args.gt_out is not None:
        logio.write_trajectory(args.gt_out, [(r.timestamp, r.gt) for r in records])
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def _slam_params(args) -> SlamParams:
    return SlamParams(
        resolution=args.resolution,
        truncation=args.truncation,
        w_max=args.w_max,
        max_expansions=args.max_expansions,
        submap_scans=args.submap_scans,
        submap_cells=args.submap_cells,
        max_iters_stage1=args.iters1,
        max_iters_stage2=args.iters2,
        trim_threshold=args.trim,
        huber_delta=args.huber_delta,
        convergence_eps=args.eps,
    )


def cmd_slam(args) -> int:
    records = logio.parse_scan_log(args.log)
    if not records:
        print("error: empty scan log", file=sys.stderr)
        return 1
    result = run_slam(records, _slam_params(args))
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    logio.write_trajectory(out / "trajectory.txt", result.trajectory)
    logio.write_submaps(result.collection.submaps, out / "submaps")
    merged = merge_submaps(result.collection.submaps)
    logio.save_map(merged.grid, out / "map.sdf2")
    print(f"slam: {len(records)} scans, {len(result.collection.submaps)} submaps, "
          f"{result.match_failures} match failures")
    return 0


def cmd_merge(args) -> int:
    submaps = logio.read_submaps(args.submaps)
    merged = merge_submaps(submaps)
    logio.save_map(merged.grid, args.out)
    print(f"merged {len(submaps)} submaps into {args.out}")
    return 0


def cmd_localize(args) -> int:
    grid = logio.load_map(args.map)
    merged = MergedMap(grid=grid, provenance=[])
    records = logio.parse_scan_log(args.log)
    if not records:
        print("error: empty scan log", file=sys.stderr)
        return 1

    if args.init is not None:
        pose = Pose2(*args.init)
    elif records[0].gt is not None:
        pose = records[0].gt
    else:
        pose = IDENTITY

    from .matching import MatchConfig

    cfg = MatchConfig(
        max_iters_stage1=args.loc_iters,
        max_iters_stage2=args.loc_iters,
        trim_threshold=args.trim if args.trim is not None else grid.truncation,
        huber_delta=args.huber_delta if args.huber_delta is not None
        else grid.w_max * grid.truncation / 3.0,
        convergence_eps=args.eps,
    )
    trajectory: list[tuple[float, Pose2]] = []
    timings = []
    for record in records:
        init = pose if not trajectory else predict_pose(
            trajectory, target_time=record.timestamp)
        start = time.perf_counter()
        result = pure_localize(merged, record.scan, init, args.loc_iters, cfg)
        timings.append(time.perf_counter() - start)
        pose = result.pose
        trajectory.append((record.timestamp, pose))
    logio.write_trajectory(args.out, trajectory)
    stats = TimingStats.from_samples(timings)
    print("timing[s] median mean max std")
    print(f"timing[s] {stats.table_row()}")
    return 0


def cmd_eval(args) -> int:
    est = logio.read_trajectory(args.est)
    gt = logio.read_trajectory(args.gt)
    for (te, _), (tg, _) in zip(est, gt):
        if not math.isclose(te, tg, rel_tol=0.0, abs_tol=1e-6):
            print("error: trajectories are not timestamp-aligned", file=sys.stderr)
            return 1
    report = evaluate_trajectory([p for _, p in est], [p for _, p in gt])
    print(f"rmse_translation {report.rmse_translation:.6f}")
    print(f"rmse_rotation {report.rmse_rotation:.6f}")
    return 0


def cmd_export(args) -> int:
    grid = logio.load_map(args.map)
    logio.export_image(grid, args.out)
    print(f"wrote {grid.geometry.width}x{grid.geometry.height} image to {args.out}")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "slam": cmd_slam,
    "merge": cmd_merge,
    "localize": cmd_localize,
    "eval": cmd_eval,
    "export": cmd_export,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
