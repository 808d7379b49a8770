"""Command-line interface: simulate, track, compare, project, render."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from .cylinder import polar_unit_to_pixel, project_cylinder, project_cylinder_polar, transform_cylinder
from .detection import load_frames, thresholded_heatmap
from .geometry import LumpedErrorParams, forward_kinematics, pose_from_params, project_point
from .harness import (
    HarnessConfig,
    compare_models,
    config_to_dict,
    default_config,
    load_config,
    run_tracking,
    simulate_to_file,
    write_comparison_csv,
    write_comparison_json,
)
from .observation import ALL_MODEL_KINDS, ObservationModelKind, extract_evidence
from .overlay import render_overlay


def _load_or_default(args) -> HarnessConfig:
    cfg = load_config(args.config) if args.config else default_config()
    if args.seed is not None:
        cfg = replace(
            cfg,
            scenario=replace(cfg.scenario, seed=args.seed),
            filter=replace(cfg.filter, seed=args.seed),
        )
    if getattr(args, "particles", None) is not None:
        cfg = replace(cfg, filter=replace(cfg.filter, n_particles=args.particles))
    return cfg


def _read_dataset(path, cfg: HarnessConfig):
    size = (cfg.scenario.camera.width, cfg.scenario.camera.height)
    return list(load_frames(path, size))


def _cmd_simulate(args) -> int:
    cfg = _load_or_default(args)
    records = simulate_to_file(cfg.scenario, args.out)
    print(f"wrote {len(records)} frames to {args.out}")
    return 0


def _cmd_track(args) -> int:
    cfg = _load_or_default(args)
    kind = ObservationModelKind.from_name(args.model)
    records = _read_dataset(args.dataset, cfg)
    result = run_tracking(records, kind, cfg)
    doc = {"model": kind.value, "result": result.to_dict()}
    with open(args.out, "w") as f:
        json.dump(doc, f, sort_keys=True, separators=(",", ":"))
        f.write("\n")
    print(
        f"{kind.value}: mean {result.metrics.mean_pct:.3f}% "
        f"std {result.metrics.std_pct:.3f}% "
        f"final accumulated {result.metrics.accumulated_error_pct[-1]:.3f}% "
        f"skipped {result.skipped_frames}; report in {args.out}"
    )
    return 0


def _cmd_compare(args) -> int:
    cfg = _load_or_default(args)
    records = _read_dataset(args.dataset, cfg)
    kinds = ALL_MODEL_KINDS if args.model is None else (ObservationModelKind.from_name(args.model),)
    rows, results = compare_models(records, kinds, cfg)
    csv_path = f"{args.out}.csv"
    json_path = f"{args.out}.json"
    write_comparison_csv(rows, csv_path)
    write_comparison_json(rows, results, json_path)
    for row in rows:
        if row.failed:
            print(f"{row.model}: failed ({row.error})")
        else:
            print(
                f"{row.model}: mean {row.mean_pct:.3f}% std {row.std_pct:.3f}% "
                f"final accumulated {row.final_accumulated_pct:.3f}% "
                f"skipped {row.skipped_frames}"
            )
    print(f"wrote {csv_path} and {json_path}")
    return 0


def _cmd_project(args) -> int:
    cfg = _load_or_default(args)
    scenario = cfg.scenario
    q = scenario.joint_values(args.frame)
    error = pose_from_params(cfg.filter.init_mean)
    parent = forward_kinematics(
        scenario.chain, q, error, upto_joint=scenario.shaft_joint_index
    )
    cyl = transform_cylinder(parent, scenario.shaft)
    implicit = project_cylinder(cyl)
    polar_unit = project_cylinder_polar(cyl)
    polar_px = tuple(polar_unit_to_pixel(line, scenario.camera) for line in polar_unit)
    doc = {
        "frame": args.frame,
        "q": q,
        "lines": [
            {
                "implicit_unit": {"a": imp.a, "b": imp.b, "c": imp.c},
                "polar_unit": {"theta": pu.theta, "rho": pu.rho},
                "polar_pixel": {"theta": pp.theta, "rho": pp.rho},
            }
            for imp, pu, pp in zip(implicit, polar_unit, polar_px)
        ],
    }
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def _cmd_render(args) -> int:
    cfg = _load_or_default(args)
    records = _read_dataset(args.dataset, cfg)
    if not 0 <= args.frame < len(records):
        raise ValueError(f"frame {args.frame} out of range (0..{len(records) - 1})")
    record = records[args.frame]
    if record.gt is None:
        raise ValueError("render needs ground truth in the dataset")
    scenario = cfg.scenario
    gt_params = pose_from_params(LumpedErrorParams(record.gt.b, record.gt.w))
    parent = forward_kinematics(
        scenario.chain, record.q, gt_params, upto_joint=scenario.shaft_joint_index
    )
    cyl = transform_cylinder(parent, scenario.shaft)
    lines = tuple(
        polar_unit_to_pixel(line, scenario.camera) for line in project_cylinder_polar(cyl)
    )
    if args.model is not None:
        kind = ObservationModelKind.from_name(args.model)
        evidence = extract_evidence(record.frame, kind, cfg.extraction, cfg.ransac)
        point_sets = [evidence.points] if not kind.is_polar else [
            thresholded_heatmap(record.frame, cfg.extraction.beta)
        ]
    else:
        point_sets = [thresholded_heatmap(record.frame, cfg.extraction.beta)]
    estimate_tip = record.gt.tip_px
    if args.report is not None:
        with open(args.report) as f:
            doc = json.load(f)
        est = np.asarray(doc["result"]["estimates"][args.frame])
        est_pose = forward_kinematics(
            scenario.chain,
            record.q,
            pose_from_params(LumpedErrorParams(est[:3], est[3:])),
        )
        estimate_tip = project_point(est_pose.apply(scenario.chain.tip_point), scenario.camera)
    render_overlay(record.frame, lines, point_sets, estimate_tip, record.gt.tip_px, args.out)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shafttrack",
        description="Synthetic shaft-line tool tracking: simulate, track, compare, inspect.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, particles=False):
        p.add_argument("--config", help="JSON config path (built-in defaults if omitted)")
        p.add_argument("--seed", type=int, default=None, help="override scenario/filter seed")
        if particles:
            p.add_argument("--particles", type=int, default=None, help="override particle count")

    p = sub.add_parser("simulate", help="generate a synthetic dataset (JSON Lines)")
    common(p)
    p.add_argument("--out", required=True, help="output dataset path")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("track", help="run one observation model over a dataset")
    common(p, particles=True)
    p.add_argument("dataset", help="JSON Lines dataset path")
    p.add_argument("--model", required=True, help="observation model name")
    p.add_argument("--out", required=True, help="output report JSON path")
    p.set_defaults(func=_cmd_track)

    p = sub.add_parser("compare", help="run all models on one dataset; CSV + JSON report")
    common(p, particles=True)
    p.add_argument("dataset", help="JSON Lines dataset path")
    p.add_argument("--model", default=None, help="restrict to one model")
    p.add_argument("--out", required=True, help="output stem (.csv/.json appended)")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("project", help="print the projected shaft lines for one frame")
    common(p)
    p.add_argument("--frame", type=int, default=0)
    p.set_defaults(func=_cmd_project)

    p = sub.add_parser("render", help="write an SVG overlay of one frame")
    common(p)
    p.add_argument("dataset", help="JSON Lines dataset path")
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--model", default=None, help="draw this model's evidence set")
    p.add_argument("--report", default=None, help="track report JSON for the estimate marker")
    p.add_argument("--out", required=True, help="output SVG path")
    p.set_defaults(func=_cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as err:  # one-line diagnostic, nonzero exit
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
