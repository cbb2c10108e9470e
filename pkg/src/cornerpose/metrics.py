"""Pose-accuracy criteria: 2D projections, ADD / ADI, and 5cm 5deg.

Every criterion passes only when the error is strictly below its threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import CameraIntrinsics, MeshModel, Pose, diameter, project_points, rotation_angle


@dataclass(frozen=True)
class MetricOutcome:
    """Error ``value`` compared against ``threshold`` (same units).

    For the 5cm 5deg criterion both fields are ``(cm, deg)`` pairs.
    """

    value: object
    threshold: object
    passed: bool


def _vertices(mesh):
    if isinstance(mesh, MeshModel):
        return mesh.vertices
    return np.asarray(mesh, dtype=float).reshape(-1, 3)


def subsample_vertices(vertices, max_vertices):
    """Uniform, deterministic subsample of at most ``max_vertices`` rows."""
    V = _vertices(vertices)
    if max_vertices is None or len(V) <= max_vertices:
        return V
    idx = np.linspace(0, len(V) - 1, int(max_vertices)).round().astype(int)
    return V[np.unique(idx)]


def projection_error(est: Pose, gt: Pose, K: CameraIntrinsics, mesh):
    """Mean pixel distance between vertices projected under ``est`` and ``gt``."""
    V = _vertices(mesh)
    d = project_points(K, est, V) - project_points(K, gt, V)
    return float(np.mean(np.sqrt(np.sum(d * d, axis=1))))


def metric_2d_projection(est, gt, K, mesh, threshold_px=5.0) -> MetricOutcome:
    value = projection_error(est, gt, K, mesh)
    return MetricOutcome(value, threshold_px, value < threshold_px)


def distance_add(est: Pose, gt: Pose, mesh):
    """Average distance between matched transformed vertices [m]."""
    V = _vertices(mesh)
    d = est.transform(V) - gt.transform(V)
    return float(np.mean(np.sqrt(np.sum(d * d, axis=1))))


def distance_adi(est: Pose, gt: Pose, mesh):
    """Average distance from each ``est``-transformed vertex to the closest
    ``gt``-transformed vertex [m]. Nearest neighbours are exact (k-d tree).
    """
    V = _vertices(mesh)
    A = est.transform(V)
    B = gt.transform(V)
    _, idx = cKDTree(B).query(A, k=1)
    d = A - B[idx]
    return float(np.mean(np.sqrt(np.sum(d * d, axis=1))))


def _diameter_threshold(mesh, k, diam):
    if diam is None:
        diam = diameter(mesh)
    return k * diam


def metric_add(est, gt, mesh, k=0.1, diam=None) -> MetricOutcome:
    """ADD with pass threshold ``k * diameter``.

    ``diam`` may be supplied when ``mesh`` is a vertex subsample.
    """
    value = distance_add(est, gt, mesh)
    thr = _diameter_threshold(mesh, k, diam)
    return MetricOutcome(value, thr, value < thr)


def metric_adi(est, gt, mesh, k=0.1, diam=None) -> MetricOutcome:
    value = distance_adi(est, gt, mesh)
    thr = _diameter_threshold(mesh, k, diam)
    return MetricOutcome(value, thr, value < thr)


def rotation_error(est: Pose, gt: Pose):
    """Geodesic angle of ``R_est R_gt^T`` [rad]."""
    return rotation_angle(est.R @ gt.R.T)


def translation_error(est: Pose, gt: Pose):
    return float(np.linalg.norm(est.t - gt.t))


def metric_5cm5deg(est, gt, cm=5.0, deg=5.0) -> MetricOutcome:
    t_cm = 100.0 * translation_error(est, gt)
    r_deg = math.degrees(rotation_error(est, gt))
    return MetricOutcome((t_cm, r_deg), (cm, deg), t_cm < cm and r_deg < deg)
