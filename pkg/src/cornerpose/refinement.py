"""Iterative corner-update refinement.

Each iteration renders the object at the current pose estimate, asks a
corner updater for a correction of the 8 projected corners, adds it to the
running corner estimate and re-fits the pose. The corner estimate is kept
as the additively updated vector; it is not re-projected from the fitted
pose between iterations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import CornerPoseError, FormatError
from .geometry import BoxCorners3D, CameraIntrinsics, MeshModel, Pose, project_points
from .pnp import Correspondences, refine_pnp, reprojection_rms, solve_pnp
from .renderer import render_mask


class CornerUpdater:
    """Interface: ``(corners (8, 2), rendered mask, frame id) -> delta (8, 2)``."""

    def __call__(self, corners, mask, frame_id):
        raise NotImplementedError


class ZeroUpdater(CornerUpdater):
    def __call__(self, corners, mask, frame_id):
        return np.zeros((8, 2))


class DampedOracleUpdater(CornerUpdater):
    """Moves the corners a fraction ``gamma`` of the way to the true corners."""

    def __init__(self, true_corners, gamma=1.0):
        self.true_corners = np.asarray(true_corners, dtype=float).reshape(8, 2)
        self.gamma = float(gamma)

    def __call__(self, corners, mask, frame_id):
        return self.gamma * (self.true_corners - np.asarray(corners, dtype=float))


class FileUpdater(CornerUpdater):
    """Deltas read from JSON lines ``{"frame": id, "iter": k, "delta": [[dx, dy] x 8]}``.

    The iteration index is counted per frame from 0; a missing entry is a
    zero delta.
    """

    def __init__(self, deltas):
        self.deltas = dict(deltas)
        self._calls = {}

    @classmethod
    def from_file(cls, path):
        deltas = {}
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    d = np.asarray(rec["delta"], dtype=float).reshape(8, 2)
                    deltas[(rec["frame"], int(rec["iter"]))] = d
                except (ValueError, KeyError, TypeError) as exc:
                    raise FormatError(f"{path}:{lineno}: {exc}") from exc
        return cls(deltas)

    def __call__(self, corners, mask, frame_id):
        k = self._calls.get(frame_id, 0)
        self._calls[frame_id] = k + 1
        return self.deltas.get((frame_id, k), np.zeros((8, 2)))

    def for_frame(self, frame_id):
        """A fresh per-frame view whose iteration counter starts at 0."""
        return FileUpdater({key: v for key, v in self.deltas.items() if key[0] == frame_id})


class RefinementFailed(CornerPoseError):
    def __init__(self, iteration, cause):
        super().__init__(f"refinement failed at iteration {iteration}: {cause}")
        self.iteration = iteration
        self.cause = cause


@dataclass
class RefinementStep:
    pose: Pose
    corners: np.ndarray
    corner_rms: float
    reprojection_rms: float


@dataclass
class RefinementTrace:
    """Per-iteration states, starting with the initial one."""

    steps: list = field(default_factory=list)

    def __len__(self):
        return len(self.steps)

    def __getitem__(self, i):
        return self.steps[i]

    @property
    def final_pose(self):
        return self.steps[-1].pose

    def as_dict(self):
        return {"steps": [{"iteration": i, "pose": s.pose.as_dict(),
                           "corners": s.corners.tolist(),
                           "corner_rms": s.corner_rms,
                           "reprojection_rms": s.reprojection_rms}
                          for i, s in enumerate(self.steps)]}


def _rms(a, b):
    d = np.asarray(a) - np.asarray(b)
    return float(np.sqrt(np.mean(np.sum(d * d, axis=1))))


def _refit(pose, c):
    warm = refine_pnp(pose, c)
    try:
        cold = solve_pnp(c)
    except CornerPoseError:
        return warm
    # a warm start can stall in a local minimum after a large update
    return cold if reprojection_rms(cold, c) < reprojection_rms(warm, c) else warm


def refine_pose(init: Pose, box: BoxCorners3D, K: CameraIntrinsics, mesh: MeshModel,
                updater: CornerUpdater, iterations=2, frame_id=None,
                reference_corners=None) -> RefinementTrace:
    """Run ``iterations`` rounds of render, corner update and pose re-fit.

    The pose is re-fitted with Levenberg-Marquardt started from the current
    estimate (or from a fresh DLT fit when that reprojects better), so a
    zero update leaves the pose exactly unchanged.

    :param reference_corners: corners the ``corner_rms`` column is measured
        against (e.g. ground truth); defaults to the final corner estimate.
    :raises RefinementFailed: wrapping render or PnP errors, with the
        1-based iteration index.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    pose = init
    v = project_points(K, init, box.corners)
    states = [(pose, v.copy())]
    for it in range(1, iterations + 1):
        try:
            mask = render_mask(mesh, pose, K)
            delta = np.asarray(updater(v.copy(), mask, frame_id), dtype=float).reshape(8, 2)
            if not np.all(np.isfinite(delta)):
                raise FormatError("updater returned a non-finite delta")
            v = v + delta
            pose = _refit(pose, Correspondences(box.corners, v, K))
        except CornerPoseError as exc:
            raise RefinementFailed(it, exc) from exc
        states.append((pose, v.copy()))
    ref = states[-1][1] if reference_corners is None else np.asarray(reference_corners, dtype=float)
    trace = RefinementTrace()
    for p, c in states:
        rms = reprojection_rms(p, Correspondences(box.corners, c, K))
        trace.steps.append(RefinementStep(p, c, _rms(c, ref), rms))
    return trace
