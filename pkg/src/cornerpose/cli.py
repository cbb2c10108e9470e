"""Command-line interface.

Exit codes: 0 success, 2 frame-level failure under ``--strict``,
3 I/O or format error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import io
from .errors import CornerPoseError, FormatError, MeshError
from .geometry import bbox_corners, project_points
from .harness import (
    EvalOptions,
    FrameFailure,
    aggregate,
    default_objects,
    estimate_pose,
    load_manifest,
    run_frames,
    sweep_from_results,
    write_synthetic_dataset,
)
from .pnp import Correspondences, reprojection_rms, solve_pnp
from .refinement import DampedOracleUpdater, ZeroUpdater, refine_pose
from .segmentation import WORK_HEIGHT, WORK_WIDTH, detect
from .symmetry import apply_half_turn, region_actions, unmirror_correspondences
from .synth import SynthConfig

EXIT_OK, EXIT_STRICT, EXIT_IO = 0, 2, 3

log = logging.getLogger("cornerpose")


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _add_metric_flags(p):
    p.add_argument("--threshold-px", type=float, default=5.0, help="2D projection threshold [px]")
    p.add_argument("--add-frac", type=float, default=0.1, help="ADD/ADI threshold as diameter fraction")
    p.add_argument("--cm", type=float, default=5.0)
    p.add_argument("--deg", type=float, default=5.0)
    p.add_argument("--max-vertices", type=int, default=None,
                   help="uniform vertex subsample for metrics")
    p.add_argument("--refine", action="store_true", help="run the corner-update refinement")
    p.add_argument("--iterations", type=int, default=2)
    p.add_argument("--updater", choices=("zero", "oracle", "file"), default="zero")
    p.add_argument("--gamma", type=float, default=1.0, help="damping of the oracle updater")
    p.add_argument("--classifier", choices=("labels", "ground_truth"), default="labels")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--strict", action="store_true", help="abort on the first failing frame")


def _options(args):
    return EvalOptions(threshold_px=args.threshold_px, add_frac=args.add_frac, cm=args.cm,
                       deg=args.deg, refine=args.refine, iterations=args.iterations,
                       updater=args.updater, gamma=args.gamma, classifier=args.classifier,
                       max_vertices=args.max_vertices, jobs=args.jobs, strict=args.strict)


def _read_corners(source):
    if os.path.exists(source):
        with open(source) as fh:
            data = json.load(fh)
    else:
        data = json.loads(source)
    if isinstance(data, dict):
        data = data["corners"]
    c = np.asarray(data, dtype=float)
    if c.shape != (8, 2):
        raise FormatError("corners must be an 8x2 array")
    return c


def cmd_solve(args):
    K = io.load_intrinsics(args.intrinsics)
    mesh = io.load_mesh(args.mesh)
    box = bbox_corners(mesh)
    corners = _read_corners(args.corners)
    spec = io.load_symmetry(args.symmetry) if args.symmetry else None
    mirror = half = False
    if spec is not None and args.region is not None:
        mirror, half = region_actions(args.region, spec)
    if mirror:
        m, M = unmirror_correspondences(corners, box, K.cx, spec.mirror_direction)
    else:
        m, M = corners, box.corners
    c = Correspondences(M, m, K)
    pose = solve_pnp(c)
    rms = reprojection_rms(pose, c)
    if half:
        pose = apply_half_turn(pose, spec)
    out = pose.as_dict()
    out["reprojection_rms"] = rms
    print(json.dumps(out))
    return EXIT_OK


def _write_or_print(text, path):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_evaluate(args):
    records, scene = load_manifest(args.manifest)
    opts = _options(args)
    report = aggregate(run_frames(records, scene, opts), scene, opts)
    if args.out:
        report.write(args.out)
    sys.stdout.write(report.to_text())
    return EXIT_OK


def cmd_sweep(args):
    records, scene = load_manifest(args.manifest)
    opts = _options(args)
    table = sweep_from_results(run_frames(records, scene, opts), _floats(args.thresholds))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "sweep.csv"), "w") as fh:
            fh.write(table.to_csv())
        with open(os.path.join(args.out, "sweep.json"), "w") as fh:
            json.dump(table.as_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")
    if args.svg:
        table.plot_svg(args.svg)
    sys.stdout.write(table.to_text())
    return EXIT_OK


def cmd_refine(args):
    records, scene = load_manifest(args.manifest)
    rec = next((r for r in records if str(r.frame) == str(args.frame)), None)
    if rec is None:
        raise FormatError(f"frame {args.frame} not in dataset")
    if rec.corners is None:
        raise FormatError("refinement needs a corner record")
    opts = _options(args)
    init, _ = estimate_pose(rec, scene, EvalOptions(classifier=opts.classifier))
    mesh = scene.meshes[rec.object_id]
    box = bbox_corners(mesh)
    K = scene.intrinsics
    truth = project_points(K, rec.gt, box.corners)
    if args.updater == "oracle":
        upd = DampedOracleUpdater(truth, args.gamma)
    elif args.updater == "file":
        if scene.updates is None:
            raise FormatError("manifest has no updates file")
        upd = scene.updates.for_frame(rec.frame)
    else:
        upd = ZeroUpdater()
    trace = refine_pose(init, box, K, mesh, upd, args.iterations, rec.frame, reference_corners=truth)
    print(json.dumps(trace.as_dict()))
    return EXIT_OK


def cmd_segment_post(args):
    scale = (1.0, 1.0)
    if args.native:
        w, h = (int(v) for v in args.native.lower().split("x"))
        scale = (w / WORK_WIDTH, h / WORK_HEIGHT)
    out = []
    for rec in io.read_jsonl(args.scores):
        try:
            res = detect(np.asarray(rec["coarse"], dtype=float),
                         None if rec.get("fine") is None else np.asarray(rec["fine"], dtype=float),
                         args.tau1, args.tau2, args.min_cells, rec.get("object"), scale)
        except KeyError as exc:
            raise FormatError(f"score record missing {exc}") from exc
        out.append({"frame": rec.get("frame"), "object": rec.get("object"), "present": res.present,
                    "center": None if res.center is None else res.center.tolist()})
    _write_or_print("".join(io.dumps_line(o) + "\n" for o in out), args.out)
    return EXIT_OK


def cmd_synth(args):
    cfg = SynthConfig(seed=args.seed, depth_range=tuple(_floats(args.depth)),
                      corner_noise_px=args.noise,
                      occluder_count=(0, args.max_occluders),
                      symmetry_range=args.symmetry_range)
    meshes, specs = default_objects()
    if args.objects:
        keep = args.objects.split(",")
        unknown = set(keep) - set(meshes)
        if unknown:
            raise FormatError(f"unknown objects {sorted(unknown)}; choose from {sorted(meshes)}")
        meshes = {k: meshes[k] for k in keep}
        specs = {k: specs[k] for k in keep}
    path = write_synthetic_dataset(args.out, cfg, args.frames, meshes, specs,
                                   score_maps=args.score_maps)
    print(path)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="cornerpose", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="pose from one frame's 8 predicted corners")
    s.add_argument("--corners", required=True, help="JSON file or literal 8x2 array")
    s.add_argument("--mesh", required=True)
    s.add_argument("--intrinsics", required=True)
    s.add_argument("--symmetry", help="symmetry spec JSON")
    s.add_argument("--region", type=int, help="region label of the frame")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("evaluate", help="evaluate a run manifest")
    e.add_argument("manifest")
    e.add_argument("--out", help="directory for report.{txt,csv,json}")
    _add_metric_flags(e)
    e.set_defaults(func=cmd_evaluate)

    w = sub.add_parser("sweep", help="2D projection pass rate over thresholds")
    w.add_argument("manifest")
    w.add_argument("--thresholds", default="5,10,15,20,25,30,35,40")
    w.add_argument("--out")
    w.add_argument("--svg", help="write an SVG plot of the curve")
    _add_metric_flags(w)
    w.set_defaults(func=cmd_sweep)

    r = sub.add_parser("refine", help="refinement trace for one frame")
    r.add_argument("manifest")
    r.add_argument("--frame", required=True)
    _add_metric_flags(r)
    r.set_defaults(func=cmd_refine)

    g = sub.add_parser("segment-post", help="score maps -> 2D object centers")
    g.add_argument("scores", help="JSON lines score-map file")
    g.add_argument("--tau1", type=float, default=0.5)
    g.add_argument("--tau2", type=float, default=0.5)
    g.add_argument("--min-cells", type=int, default=2)
    g.add_argument("--native", help="native image size WxH to rescale centers to")
    g.add_argument("--out")
    g.set_defaults(func=cmd_segment_post)

    y = sub.add_parser("synth", help="generate a synthetic dataset")
    y.add_argument("out")
    y.add_argument("--frames", type=int, default=100)
    y.add_argument("--seed", type=int, default=0)
    y.add_argument("--noise", type=float, default=0.0, help="corner noise sigma [px]")
    y.add_argument("--depth", default="0.5,1.5", help="depth range min,max [m]")
    y.add_argument("--max-occluders", type=int, default=0)
    y.add_argument("--symmetry-range", choices=("full", "period", "canonical"), default="full")
    y.add_argument("--objects", help="comma-separated subset of the default objects")
    y.add_argument("--score-maps", action="store_true")
    y.set_defaults(func=cmd_synth)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FrameFailure as exc:
        log.error("%s", exc)
        return EXIT_STRICT
    except (OSError, FormatError, MeshError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return EXIT_IO
    except CornerPoseError as exc:
        log.error("%s", exc)
        return EXIT_STRICT if getattr(args, "strict", False) else 1


if __name__ == "__main__":
    sys.exit(main())
