"""End-to-end evaluation: records -> symmetry unfold -> PnP -> refinement ->
metrics, aggregated into per-object pass-rate tables.

A dataset is a JSON lines file with one record per frame::

    {"frame": 0, "object": "ape", "gt": {"e": [...], "t": [...]},
     "corners": [[x, y] x 8], "region": 2, "visibility": 0.8}

``corners`` may be replaced by ``"pose": {"e": ..., "t": ...}`` for a
direct pose prediction, which is scored without PnP. A run manifest (JSON)
points at the dataset and at per-object meshes, symmetry specs and the
camera intrinsics; relative paths resolve against the manifest's directory.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import io
from .errors import CornerPoseError, FormatError
from .geometry import CameraIntrinsics, MeshModel, Pose, bbox_corners, diameter, project_points
from .metrics import (
    distance_add,
    distance_adi,
    projection_error,
    rotation_error,
    subsample_vertices,
    translation_error,
)
from .pnp import PNP_SETTINGS, Correspondences, solve_pnp
from .refinement import DampedOracleUpdater, FileUpdater, ZeroUpdater, refine_pose
from .symmetry import (
    FileRegionClassifier,
    GroundTruthClassifier,
    SymmetrySpec,
    apply_half_turn,
    axis_tilt,
    region_actions,
    unmirror_correspondences,
)

METRICS = ("2d_projection", "6d_pose", "5cm5deg")

ASYMMETRIC = SymmetrySpec("asymmetric")


class FrameFailure(CornerPoseError):
    """A frame failed under ``strict`` evaluation."""


# -- records ------------------------------------------------------------------

def _pose_from(d, what):
    try:
        return Pose(d["e"], d["t"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad {what} pose {d!r}: {exc}") from exc


@dataclass(frozen=True, eq=False)
class FrameRecord:
    frame: object
    object_id: str
    gt: Pose
    corners: np.ndarray | None = None
    pose: Pose | None = None
    region: int | None = None
    visibility: float | None = None

    def __post_init__(self):
        if (self.corners is None) == (self.pose is None):
            raise FormatError(f"frame {self.frame}: exactly one of corners / pose required")
        if self.corners is not None:
            c = np.asarray(self.corners, dtype=float)
            if c.shape != (8, 2):
                raise FormatError(f"frame {self.frame}: corners must be 8x2")
            object.__setattr__(self, "corners", c)

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(d["frame"], str(d["object"]), _pose_from(d["gt"], "gt"),
                       d.get("corners"),
                       _pose_from(d["pose"], "predicted") if "pose" in d else None,
                       None if d.get("region") is None else int(d["region"]),
                       None if d.get("visibility") is None else float(d["visibility"]))
        except KeyError as exc:
            raise FormatError(f"record missing field {exc}") from exc

    def as_dict(self):
        d = {"frame": self.frame, "object": self.object_id, "gt": self.gt.as_dict()}
        if self.corners is not None:
            d["corners"] = self.corners.tolist()
        else:
            d["pose"] = self.pose.as_dict()
        if self.region is not None:
            d["region"] = self.region
        if self.visibility is not None:
            d["visibility"] = self.visibility
        return d


def load_dataset(path):
    return [FrameRecord.from_dict(d) for d in io.read_jsonl(path)]


# -- options and run context --------------------------------------------------

@dataclass(frozen=True)
class EvalOptions:
    threshold_px: float = 5.0
    add_frac: float = 0.1
    cm: float = 5.0
    deg: float = 5.0
    refine: bool = False
    iterations: int = 2
    updater: str = "zero"          # zero | oracle | file
    gamma: float = 1.0
    classifier: str = "labels"     # labels | ground_truth
    max_vertices: int | None = None
    visibility_threshold: float = 0.1
    tilt_flag_deg: float = 30.0
    jobs: int = 1
    strict: bool = False

    def echo(self):
        d = dict(self.__dict__)
        d.pop("jobs")
        return d


@dataclass
class Scene:
    """Everything a run needs besides the frame records."""

    meshes: dict
    intrinsics: CameraIntrinsics
    specs: dict = field(default_factory=dict)
    region_labels: FileRegionClassifier | None = None
    updates: FileUpdater | None = None

    def spec(self, object_id):
        return self.specs.get(object_id, ASYMMETRIC)


def load_manifest(path):
    """``(records, scene)`` from a run manifest."""
    base = os.path.dirname(os.path.abspath(path))

    def rel(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    with open(path) as fh:
        try:
            man = json.load(fh)
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from exc
    try:
        K = io.load_intrinsics(rel(man["intrinsics"])) if isinstance(man["intrinsics"], str) \
            else io.intrinsics_from_dict(man["intrinsics"])
        meshes = {name: io.load_mesh(rel(p), name) for name, p in man["meshes"].items()}
        specs = {name: io.load_symmetry(s if isinstance(s, dict) else rel(s))
                 for name, s in man.get("symmetry", {}).items()}
        records = load_dataset(rel(man["dataset"]))
    except KeyError as exc:
        raise FormatError(f"{path}: manifest missing {exc}") from exc
    labels = FileRegionClassifier.from_file(rel(man["region_labels"])) if man.get("region_labels") else None
    updates = FileUpdater.from_file(rel(man["updates"])) if man.get("updates") else None
    return records, Scene(meshes, K, specs, labels, updates)


# -- per-frame pipeline -------------------------------------------------------

@dataclass
class FrameResult:
    frame: object
    object_id: str
    status: str                    # ok | filtered | failed
    errors: dict = field(default_factory=dict)
    passed: dict = field(default_factory=dict)
    pose: Pose | None = None
    mirrored: bool = False
    tilt_flagged: bool = False
    message: str = ""

    def as_dict(self):
        return {"frame": self.frame, "object": self.object_id, "status": self.status,
                "errors": {k: list(v) if isinstance(v, tuple) else v for k, v in self.errors.items()},
                "passed": self.passed,
                "pose": None if self.pose is None else self.pose.as_dict(),
                "mirrored": self.mirrored, "tilt_flagged": self.tilt_flagged,
                "message": self.message}


def _region_for(rec: FrameRecord, spec, scene: Scene, opts: EvalOptions):
    if spec.kind not in ("symmetric", "quasi_symmetric"):
        return None
    if rec.region is not None:
        return rec.region
    if opts.classifier == "ground_truth":
        return GroundTruthClassifier({rec.object_id: spec}).region(rec.frame, rec.object_id, rec.gt)
    if scene.region_labels is not None:
        return scene.region_labels.region(rec.frame, rec.object_id)
    return None


def _updater_for(rec, box, scene, opts):
    if opts.updater == "zero":
        return ZeroUpdater()
    if opts.updater == "oracle":
        return DampedOracleUpdater(project_points(scene.intrinsics, rec.gt, box.corners), opts.gamma)
    if opts.updater == "file":
        if scene.updates is None:
            raise FormatError("file updater selected but the manifest has no updates file")
        return scene.updates.for_frame(rec.frame)
    raise ValueError(f"unknown updater {opts.updater!r}")


def estimate_pose(rec: FrameRecord, scene: Scene, opts: EvalOptions):
    """Recovered pose for a corner record: unfold, PnP, half turn, refine.

    :return: ``(pose, mirrored)``.
    """
    K = scene.intrinsics
    mesh = scene.meshes[rec.object_id]
    spec = scene.spec(rec.object_id)
    box = bbox_corners(mesh)
    region = _region_for(rec, spec, scene, opts)
    mirror, half_turn = region_actions(region, spec) if region is not None else (False, False)
    if mirror:
        m, M = unmirror_correspondences(rec.corners, box, K.cx, spec.mirror_direction)
    else:
        m, M = rec.corners, box.corners
    pose = solve_pnp(Correspondences(M, m, K))
    if half_turn:
        pose = apply_half_turn(pose, spec)
    if opts.refine:
        updater = _updater_for(rec, box, scene, opts)
        pose = refine_pose(pose, box, K, mesh, updater, opts.iterations, rec.frame).final_pose
    return pose, mirror


class _Prepared:
    """Per-object metric inputs computed once per run."""

    def __init__(self, scene: Scene, opts: EvalOptions):
        self.vertices = {}
        self.diameters = {}
        for name, mesh in scene.meshes.items():
            self.diameters[name] = diameter(mesh)
            self.vertices[name] = subsample_vertices(mesh, opts.max_vertices)


def evaluate_frame(rec: FrameRecord, scene: Scene, opts: EvalOptions, prep=None) -> FrameResult:
    if rec.object_id not in scene.meshes:
        raise FormatError(f"frame {rec.frame}: no mesh for object {rec.object_id!r}")
    prep = prep or _Prepared(scene, opts)
    spec = scene.spec(rec.object_id)
    res = FrameResult(rec.frame, rec.object_id, "ok")
    if spec.kind in ("symmetric", "quasi_symmetric", "revolution"):
        res.tilt_flagged = math.degrees(axis_tilt(rec.gt, spec)) > opts.tilt_flag_deg
    if rec.visibility is not None and rec.visibility < opts.visibility_threshold:
        res.status = "filtered"
        return res
    try:
        if rec.pose is not None:
            est = rec.pose
        else:
            est, res.mirrored = estimate_pose(rec, scene, opts)
        V = prep.vertices[rec.object_id]
        diam = prep.diameters[rec.object_id]
        e2d = projection_error(est, rec.gt, scene.intrinsics, V)
        e6d = (distance_adi if spec.uses_adi else distance_add)(est, rec.gt, V)
        t_cm = 100.0 * translation_error(est, rec.gt)
        r_deg = math.degrees(rotation_error(est, rec.gt))
    except CornerPoseError as exc:
        if opts.strict:
            raise FrameFailure(f"frame {rec.frame}: {exc}") from exc
        res.status = "failed"
        res.message = str(exc)
        res.passed = {m: False for m in METRICS}
        return res
    res.pose = est
    res.errors = {"2d_projection": e2d, "6d_pose": e6d, "5cm5deg": (t_cm, r_deg)}
    res.passed = {"2d_projection": e2d < opts.threshold_px,
                  "6d_pose": e6d < opts.add_frac * diam,
                  "5cm5deg": t_cm < opts.cm and r_deg < opts.deg}
    return res


def run_frames(records, scene: Scene, opts: EvalOptions):
    """Per-frame results in record order, independent of ``opts.jobs``."""
    prep = _Prepared(scene, opts)

    def one(rec):
        return evaluate_frame(rec, scene, opts, prep)

    if opts.jobs <= 1 or len(records) < 2:
        return [one(r) for r in records]
    with ThreadPoolExecutor(max_workers=opts.jobs) as pool:
        return list(pool.map(one, records))


# -- reports ------------------------------------------------------------------

_CSV_FIELDS = ("object", "metric", "evaluated", "passed", "pass_rate",
               "error_mean", "error_median", "error2_mean", "error2_median", "unit")

_UNITS = {"2d_projection": "px", "6d_pose": "m", "5cm5deg": "cm,deg"}


def _stat(values, fn):
    return float(fn(values)) if len(values) else None


@dataclass
class EvalReport:
    rows: list
    counts: dict
    config: dict
    frames: list = field(default_factory=list)

    def row(self, object_id, metric):
        for r in self.rows:
            if r["object"] == object_id and r["metric"] == metric:
                return r
        raise KeyError((object_id, metric))

    def pass_rate(self, object_id, metric):
        return self.row(object_id, metric)["pass_rate"]

    def as_dict(self, with_frames=False):
        d = {"config": self.config, "counts": self.counts, "rows": self.rows}
        if with_frames:
            d["frames"] = [f.as_dict() for f in self.frames]
        return d

    def to_json(self, with_frames=False):
        return json.dumps(self.as_dict(with_frames), indent=1, sort_keys=True)

    def to_csv(self):
        buf = _io.StringIO()
        w = csv.DictWriter(buf, fieldnames=_CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in _CSV_FIELDS})
        return buf.getvalue()

    def to_text(self):
        objects = [o for o in dict.fromkeys(r["object"] for r in self.rows)]
        lines = [f"{'object':<16}" + "".join(f"{m:>15}" for m in METRICS)
                 + f"{'eval':>7}{'filt':>6}{'fail':>6}"]
        totals = {k: sum(c[k] for c in self.counts.values())
                  for k in ("evaluated", "filtered", "failed")}
        for o in objects:
            c = totals if o == "average" else self.counts.get(o, {})
            rates = "".join(f"{self.pass_rate(o, m):>15.1f}" if self.pass_rate(o, m) is not None
                            else f"{'-':>15}" for m in METRICS)
            lines.append(f"{o:<16}{rates}{c.get('evaluated', 0):>7}"
                         f"{c.get('filtered', 0):>6}{c.get('failed', 0):>6}")
        lines.append("6d_pose: " + ", ".join(f"{o}={self.config['metric_choice'].get(o, '-')}"
                                              for o in objects if o != "average"))
        return "\n".join(lines) + "\n"

    def write(self, out_dir, stem="report"):
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, stem + ".json"), "w") as fh:
            fh.write(self.to_json(with_frames=True) + "\n")
        with open(os.path.join(out_dir, stem + ".csv"), "w") as fh:
            fh.write(self.to_csv())
        with open(os.path.join(out_dir, stem + ".txt"), "w") as fh:
            fh.write(self.to_text())


def aggregate(results, scene: Scene, opts: EvalOptions) -> EvalReport:
    """Per-object, per-metric pass rates and error statistics.

    Failed frames count as evaluated and failing; filtered frames are
    excluded. An ``average`` row holds the mean of the per-object rates.
    """
    by_obj = {}
    for r in results:
        by_obj.setdefault(r.object_id, []).append(r)
    rows, counts = [], {}
    for obj in sorted(by_obj):
        rs = by_obj[obj]
        ev = [r for r in rs if r.status != "filtered"]
        ok = [r for r in ev if r.status == "ok"]
        counts[obj] = {"total": len(rs), "evaluated": len(ev),
                       "filtered": len(rs) - len(ev),
                       "failed": sum(r.status == "failed" for r in rs),
                       "tilt_flagged": sum(r.tilt_flagged for r in rs),
                       "mirrored": sum(r.mirrored for r in rs)}
        for m in METRICS:
            n_pass = sum(bool(r.passed.get(m)) for r in ev)
            row = {"object": obj, "metric": m, "evaluated": len(ev), "passed": n_pass,
                   "pass_rate": 100.0 * n_pass / len(ev) if ev else None,
                   "unit": _UNITS[m]}
            if m == "5cm5deg":
                t = [r.errors[m][0] for r in ok]
                a = [r.errors[m][1] for r in ok]
                row.update(error_mean=_stat(t, np.mean), error_median=_stat(t, np.median),
                           error2_mean=_stat(a, np.mean), error2_median=_stat(a, np.median))
            else:
                v = [r.errors[m] for r in ok]
                row.update(error_mean=_stat(v, np.mean), error_median=_stat(v, np.median),
                           error2_mean=None, error2_median=None)
            rows.append(row)
    if by_obj:
        for m in METRICS:
            rates = [r["pass_rate"] for r in rows if r["metric"] == m and r["pass_rate"] is not None]
            rows.append({"object": "average", "metric": m,
                         "evaluated": sum(c["evaluated"] for c in counts.values()),
                         "passed": sum(r["passed"] for r in rows if r["metric"] == m),
                         "pass_rate": float(np.mean(rates)) if rates else None,
                         "error_mean": None, "error_median": None,
                         "error2_mean": None, "error2_median": None, "unit": _UNITS[m]})
    config = {
        "options": opts.echo(),
        "pnp": PNP_SETTINGS,
        "metric_choice": {o: ("ADI" if scene.spec(o).uses_adi else "ADD") for o in sorted(by_obj)},
        "diameter": "max pairwise vertex distance",
        "diameters": {o: diameter(scene.meshes[o]) for o in sorted(by_obj) if o in scene.meshes},
        "symmetry": {o: scene.spec(o).to_dict() for o in sorted(by_obj)},
        "corner_update": "additive (corner estimate not re-projected between iterations)",
    }
    return EvalReport(rows, counts, config, list(results))


def evaluate(records, scene: Scene, opts: EvalOptions = EvalOptions()) -> EvalReport:
    """Run the pipeline over all records and aggregate."""
    return aggregate(run_frames(records, scene, opts), scene, opts)


# -- threshold sweep ----------------------------------------------------------

@dataclass
class SweepTable:
    thresholds: list
    rates: dict        # object -> list of pass rates (%), plus "all"

    def to_csv(self):
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["threshold_px"] + list(self.rates))
        for i, th in enumerate(self.thresholds):
            w.writerow([th] + [self.rates[o][i] for o in self.rates])
        return buf.getvalue()

    def to_text(self):
        cols = list(self.rates)
        lines = [f"{'px':>8}" + "".join(f"{c:>14}" for c in cols)]
        for i, th in enumerate(self.thresholds):
            lines.append(f"{th:>8g}" + "".join(f"{self.rates[c][i]:>14.1f}" for c in cols))
        return "\n".join(lines) + "\n"

    def as_dict(self):
        return {"thresholds": [float(t) for t in self.thresholds], "rates": self.rates}

    def plot_svg(self, path):
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        with matplotlib.rc_context({"svg.hashsalt": "cornerpose"}):
            fig, ax = plt.subplots(figsize=(5, 3.5))
            for name, rates in self.rates.items():
                ax.plot(self.thresholds, rates, marker="o", label=name)
            ax.set_xlabel("2D projection threshold [px]")
            ax.set_ylabel("correct poses [%]")
            ax.set_ylim(0, 100)
            ax.legend(fontsize=7)
            fig.tight_layout()
            fig.savefig(path, format="svg", metadata={"Date": None})
            plt.close(fig)


def sweep_from_results(results, thresholds) -> SweepTable:
    """Pass rate of the 2D projection criterion at each threshold.

    Failed frames count as failing at every threshold; filtered frames are
    excluded.
    """
    thresholds = [float(t) for t in thresholds]
    groups = {}
    for r in results:
        if r.status == "filtered":
            continue
        groups.setdefault(r.object_id, []).append(r)
    rates = {}
    everything = [r for o in sorted(groups) for r in groups[o]]
    for name, rs in [(o, groups[o]) for o in sorted(groups)] + [("all", everything)]:
        errs = np.array([r.errors["2d_projection"] if r.status == "ok" else np.inf for r in rs])
        rates[name] = [100.0 * float(np.sum(errs < th)) / len(errs) if len(errs) else 0.0
                       for th in thresholds]
    return SweepTable(thresholds, rates)


def threshold_sweep(records, scene: Scene, thresholds, opts: EvalOptions = EvalOptions()) -> SweepTable:
    return sweep_from_results(run_frames(records, scene, opts), thresholds)


# -- synthetic datasets -------------------------------------------------------

def default_objects():
    """Synthetic object set covering all four symmetry kinds."""
    from .synth import irregular_mesh, prism_mesh, quasi_box_mesh

    y = (0.0, 1.0, 0.0)
    meshes = {
        "irregular": irregular_mesh(),
        "prism4": prism_mesh(4, radius=0.05, height=0.08, name="prism4"),
        "quasi_box": quasi_box_mesh(),
        "cylinder": prism_mesh(32, radius=0.04, height=0.12, name="cylinder"),
    }
    specs = {
        "irregular": SymmetrySpec("asymmetric"),
        "prism4": SymmetrySpec("symmetric", math.pi / 2, y),
        "quasi_box": SymmetrySpec("quasi_symmetric", math.pi, y),
        "cylinder": SymmetrySpec("revolution", 0.0, y),
    }
    return meshes, specs


DEFAULT_INTRINSICS = CameraIntrinsics(572.4, 573.6, 325.3, 242.0, 640, 480)


def write_synthetic_dataset(out_dir, cfg, n_frames, meshes=None, specs=None, K=None,
                            score_maps=False):
    """Generate frames and write a self-contained run directory.

    Files: ``manifest.json``, ``dataset.jsonl``, ``region_labels.jsonl``,
    ``intrinsics.json``, ``meshes/<name>.json`` and, with ``score_maps``,
    ``scores.jsonl`` in the segmentation input format.

    :return: path of the manifest.
    """
    from .synth import generate_frames

    if meshes is None:
        meshes, specs = default_objects()
    specs = specs or {}
    K = K or DEFAULT_INTRINSICS
    frames = generate_frames(meshes, specs, K, cfg, n_frames, score_maps=score_maps)
    os.makedirs(os.path.join(out_dir, "meshes"), exist_ok=True)
    for name, mesh in meshes.items():
        io.save_mesh_json(mesh, os.path.join(out_dir, "meshes", f"{name}.json"))
    io.save_intrinsics(K, os.path.join(out_dir, "intrinsics.json"))
    io.write_jsonl(os.path.join(out_dir, "dataset.jsonl"), [f.as_record() for f in frames])
    io.write_jsonl(os.path.join(out_dir, "region_labels.jsonl"),
                   [{"frame": f.frame_id, "region": f.region} for f in frames if f.region is not None])
    if score_maps:
        io.write_jsonl(os.path.join(out_dir, "scores.jsonl"),
                       [{"frame": f.frame_id, "object": f.object_id,
                         "coarse": f.coarse_scores.tolist(), "fine": f.fine_scores.tolist(),
                         "center_gt": project_points(K.scaled(512, 384), f.gt_pose, np.zeros((1, 3)))[0].tolist()}
                        for f in frames])
    manifest = {
        "dataset": "dataset.jsonl",
        "intrinsics": "intrinsics.json",
        "meshes": {n: f"meshes/{n}.json" for n in meshes},
        "symmetry": {n: s.to_dict() for n, s in specs.items()},
        "region_labels": "region_labels.jsonl",
        "synth_config": cfg.as_dict(),
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return path


def with_options(opts: EvalOptions, **kw) -> EvalOptions:
    return replace(opts, **{k: v for k, v in kw.items() if v is not None})
