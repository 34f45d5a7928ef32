"""Command line front end.

Exit status: 0 success, 1 unexpected internal error, 2 user or input error.
"""
from __future__ import annotations

import argparse
import json
import sys
import traceback
import warnings
from pathlib import Path

from .errors import InvalidParams, IoFailure, ParseError, SceneSmithError

EXIT_OK, EXIT_INTERNAL, EXIT_USER = 0, 1, 2


class UsageError(SceneSmithError):
    pass


def _say(*args):
    print(*args, flush=True)


def _progress(n, total):
    step = max(total // 10, 1)
    if n == total or n % step == 0:
        print(f"  {n}/{total} frames", file=sys.stderr, flush=True)


# ---------------------------------------------------------------- subcommands


def cmd_calibrate(args) -> int:
    from .calibration import write_calibration
    from .config import load_scene_config
    from .pipeline import calibrate_scene

    cfg = load_scene_config(args.scene)
    result = calibrate_scene(cfg, correspondences=args.correspondences)
    out = args.out or cfg.calibration
    if out is None:
        raise UsageError("no --out given and the scene config has no 'calibration' path")
    write_calibration(out, result)
    k = result.camera.intrinsics
    _say(f"rms_px {result.rms_reprojection_px:.6e}")
    _say(f"fx {k.fx:.4f} fy {k.fy:.4f} cx {k.cx:.4f} cy {k.cy:.4f} focal_multiplier {result.focal_multiplier}")
    _say(f"wrote {out}")
    return EXIT_OK


def cmd_background(args) -> int:
    import numpy as np

    from .calibration import extract_background
    from .pipeline import IMAGE_SUFFIXES
    from .renderer.io import read_png, write_rgb_png

    files = []
    for f in args.frames:
        p = Path(f)
        if p.is_dir():
            files += sorted(q for q in p.iterdir() if q.suffix.lower() in IMAGE_SUFFIXES)
        elif p.exists():
            files.append(p)
        else:
            raise IoFailure(f"no such file: {p}")
    try:
        frames = [read_png(p) for p in files]
    except OSError as exc:
        raise IoFailure(f"cannot read frame: {exc}") from None
    bg = extract_background(frames)
    write_rgb_png(args.out, np.asarray(bg))
    _say(f"median of {len(files)} frames -> {args.out}")
    return EXIT_OK


def cmd_generate(args) -> int:
    from .config import load_scene_config, parse_resolution
    from .pipeline import generate, plan_manifest, prepare

    cfg = load_scene_config(args.scene)
    res = parse_resolution(args.resolution) if args.resolution else None
    plan = prepare(cfg, args.count, seed=args.seed, split=args.split, preset_name=args.preset, resolution=res,
                   out_dir=args.out)
    if args.plan_only:
        m = plan_manifest(plan)
        _say(f"planned {m['image_count']} frames ({len(m['splits']['train'])} train / {len(m['splits']['val'])} val)"
             f" at {m['resolution'][0]}x{m['resolution'][1]} -> {plan.out_dir / 'manifest.json'}")
        return EXIT_OK
    if args.workers is not None and args.workers < 1:
        raise UsageError("--workers must be >= 1")
    m = generate(plan, workers=args.workers, progress=None if args.quiet else _progress)
    _say(f"{m['image_count']} frames ({len(m['splits']['train'])} train / {len(m['splits']['val'])} val), "
         f"{m['annotation_count']} annotations, {m['frames_rendered_this_run']} rendered this run "
         f"in {m['seconds_this_run']:.1f} s -> {plan.out_dir}")
    return EXIT_OK


def _thresholds(text: str) -> tuple:
    try:
        ts = tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise UsageError(f"--iou must be comma-separated numbers, got {text!r}") from None
    if not ts or not all(0.0 < t <= 1.0 for t in ts):
        raise UsageError(f"--iou thresholds must lie in (0, 1], got {text!r}")
    return ts


def cmd_evaluate(args) -> int:
    from .metrics import evaluate, load_records

    ts = _thresholds(args.iou)
    category = None if args.category == "all" else args.category
    gts = load_records(args.gt, predictions=False, category=category)
    dets = load_records(args.pred, predictions=True, category=category)
    report = evaluate(dets, gts, ts, pose=args.pose, bin_centers=args.bin_centers)
    report.extra.update({"gt": str(args.gt), "pred": str(args.pred), "num_gt": len(gts), "num_pred": len(dets)})
    for t in ts:
        c = report.counts[t]
        _say(f"AP@{t:g} {report.ap[t]:.4f}  (tp {c['tp']} fp {c['fp']} fn {c['fn']})")
    if args.pose:
        if report.acc10 is None:
            _say("pose: no matched pairs")
        else:
            _say(f"Acc10 {report.acc10:.4f}  MedErr {report.med_err:.2f} deg  ({report.pose_pairs} pairs)")
    if args.out:
        from .renderer.io import write_json

        write_json(args.out, report.to_dict(), indent=2)
    return EXIT_OK


def cmd_overlay(args) -> int:
    from .overlay import render_overlay

    render_overlay(args.dataset, args.frame, args.out)
    _say(f"wrote {args.out}")
    return EXIT_OK


def _report_from_file(path):
    from .metrics import EvalReport

    try:
        doc = json.loads(Path(path).read_text())
        ap = {float(k): float(v) for k, v in doc["ap"].items()}
        return EvalReport(ap, doc.get("counts", {}), doc.get("acc10"), doc.get("med_err_deg"), doc.get("pose_pairs", 0))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc.strerror or exc}") from None
    except (ValueError, KeyError, TypeError, AttributeError) as exc:
        raise ParseError(f"{path}: not an evaluation result ({exc})") from None


def cmd_report(args) -> int:
    from .metrics import ablation_report, format_ablation
    from .randomizer import CONDITION_LABELS

    entries = []
    for item in args.results:
        label, sep, path = item.rpartition("=")
        if not sep or not label:
            raise UsageError(f"expected LABEL=result.json, got {item!r}")
        entries.append((CONDITION_LABELS.get(label, label), _report_from_file(path)))
    rows = ablation_report(entries)
    _say(format_ablation(rows))
    if args.out:
        from .renderer.io import write_json

        write_json(args.out, rows, indent=2)
    return EXIT_OK


def cmd_init_demo(args) -> int:
    from .config import parse_resolution
    from .demo import build_demo

    res = parse_resolution(args.resolution)
    if args.frames < 1:
        raise UsageError("--frames must be >= 1")
    if args.noise < 0:
        raise InvalidParams("--noise must be >= 0")
    path = build_demo(args.out, res, args.frames, args.noise, args.seed)
    _say(f"wrote demo scene {path}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    from . import __version__

    ap = argparse.ArgumentParser(prog="scenesmith", description="Scene-specific synthetic data for fixed cameras.")
    ap.add_argument("--version", action="version", version=f"scenesmith {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="solve camera pose (and focal) from 2D-3D correspondences")
    p.add_argument("--scene", required=True, help="scene config (JSON)")
    p.add_argument("--correspondences", help="u,v,X,Y,Z CSV; defaults to the scene's")
    p.add_argument("--out", help="calibration file; defaults to the scene's 'calibration' path")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("background", help="temporal median of video frames")
    p.add_argument("--frames", nargs="+", required=True, help="image files and/or directories")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_background)

    p = sub.add_parser("generate", help="render an annotated synthetic dataset")
    p.add_argument("--scene", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--split", default="80:20", help="train:val ratio (default 80:20)")
    p.add_argument("--preset", help="randomization preset, replacing the config's")
    p.add_argument("--out", help="dataset directory; defaults to the scene's 'output'")
    p.add_argument("--resolution", help="render size WxH (default: scene resolution)")
    p.add_argument("--workers", type=int, help="worker processes (default: SCENESMITH_THREADS or CPU count)")
    p.add_argument("--plan-only", action="store_true", help="write the manifest without rendering")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="AP and pose metrics of predictions against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--iou", default="0.5,0.75")
    p.add_argument("--pose", action="store_true", help="also report Acc10 and MedErr")
    p.add_argument("--bin-centers", action="store_true", help="score continuous yaw at its bin center")
    p.add_argument("--category", default="car", help="class to evaluate, or 'all'")
    p.add_argument("--out", help="write the report as JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("overlay", help="draw a frame's annotations over its image")
    p.add_argument("--dataset", required=True)
    p.add_argument("--frame", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_overlay)

    p = sub.add_parser("report", help="ablation table from evaluation results")
    p.add_argument("results", nargs="+", help="CONDITION=result.json, CONDITION a label like 'T + LA + D' or a preset")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("init-demo", help="write a self-contained demo scene")
    p.add_argument("--out", required=True)
    p.add_argument("--resolution", default="1440x810")
    p.add_argument("--frames", type=int, default=7, help="video frames for the background median")
    p.add_argument("--noise", type=float, default=0.0, help="pixel noise on the correspondences")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_init_demo)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    # numba complains about an old TBB even though the workqueue layer is used
    warnings.filterwarnings("ignore", message="The TBB threading layer")
    try:
        return args.func(args)
    except SceneSmithError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USER
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USER
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
