"""Rotational symmetry: folding the angle about the symmetry axis into the
range a predictor is trained on, and undoing the fold at run time.

For an object with angle of symmetry ``alpha`` the rotation ``beta`` about
the axis is only defined modulo ``alpha``. Predictors are trained on
``r1 = [0, alpha/2)``; an angle in ``r2 = [alpha/2, alpha)`` is handled by
mirroring the image, where the object appears rotated by ``alpha - beta``.
Quasi-symmetric objects (symmetric under a half turn except for small
details) use four regions of ``pi/2`` and an extra half turn for
``beta >= pi``. Objects of revolution are always predicted at angle 0.

Regions are half-open and compared exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, SymmetryDomainError
from .geometry import MIRROR_X, BoxCorners3D, Pose, rot_axis_angle, rot_log

TWO_PI = 2.0 * math.pi

KINDS = ("asymmetric", "revolution", "symmetric", "quasi_symmetric")


@dataclass(frozen=True, eq=False)
class SymmetrySpec:
    """Symmetry class of an object.

    :param kind: one of ``asymmetric``, ``revolution``, ``symmetric``,
        ``quasi_symmetric``.
    :param alpha: angle of symmetry [rad]; must divide 2*pi for
        ``symmetric`` and equal pi for ``quasi_symmetric``.
    :param axis: symmetry axis in the object frame (normalized on input).
    :param mirror_direction: ``"vertical"`` (left-right image mirroring,
        the only implemented mode) or ``"horizontal"``.
    """

    kind: str = "asymmetric"
    alpha: float = 0.0
    axis: np.ndarray = (0.0, 0.0, 1.0)
    mirror_direction: str = "vertical"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown symmetry kind {self.kind!r}")
        axis = np.array(self.axis, dtype=float).reshape(3)
        n = np.linalg.norm(axis)
        if not n > 0:
            raise ValueError("symmetry axis must be non-zero")
        axis = axis / n
        axis.setflags(write=False)
        object.__setattr__(self, "axis", axis)
        alpha = float(self.alpha)
        if self.kind == "symmetric":
            if not 0 < alpha < TWO_PI:
                raise ValueError("alpha must lie in (0, 2*pi)")
            order = TWO_PI / alpha
            if abs(order - round(order)) > 1e-9:
                raise ValueError("alpha must divide 2*pi")
        elif self.kind == "quasi_symmetric":
            if abs(alpha - math.pi) > 1e-9:
                raise ValueError("quasi-symmetric objects use alpha = pi")
            alpha = math.pi
        elif self.kind == "revolution":
            alpha = 0.0
        object.__setattr__(self, "alpha", alpha)
        if self.mirror_direction not in ("vertical", "horizontal"):
            raise ValueError("mirror_direction must be 'vertical' or 'horizontal'")

    @property
    def uses_adi(self):
        """Whether pose accuracy uses the symmetric (nearest-vertex) distance."""
        return self.kind != "asymmetric"

    @classmethod
    def from_dict(cls, d):
        try:
            kind = d["kind"]
            if "alpha_deg" in d:
                alpha = math.radians(float(d["alpha_deg"]))
            else:
                alpha = float(d.get("alpha", 0.0))
            return cls(kind, alpha, d.get("axis", (0.0, 0.0, 1.0)),
                       d.get("mirror_direction", "vertical"))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad symmetry spec {d!r}: {exc}") from exc

    def to_dict(self):
        return {"kind": self.kind, "alpha_deg": math.degrees(self.alpha),
                "axis": [float(v) for v in self.axis],
                "mirror_direction": self.mirror_direction}


@dataclass(frozen=True)
class FoldResult:
    beta_canonical: float
    mirror: bool = False
    add_half_turn: bool = False
    region_index: int = 1


def reduce_angle(beta):
    """Reduce an angle into ``[0, 2*pi)``."""
    b = math.fmod(float(beta), TWO_PI)
    if b < 0:
        b += TWO_PI
        if b >= TWO_PI:  # tiny negative inputs round up to 2*pi
            b = 0.0
    return b


def _check_beta(beta):
    beta = float(beta)
    if not (0.0 <= beta < TWO_PI):
        raise SymmetryDomainError(f"beta={beta!r} outside [0, 2*pi)")
    return beta


def classify_region(beta, spec: SymmetrySpec) -> int:
    """Ground-truth region classifier.

    Symmetric objects: 1 for ``beta mod alpha`` in ``[0, alpha/2)``, else 2.
    Quasi-symmetric objects: regions 1..4 split ``[0, 2*pi)`` at
    ``pi/2, pi, 3*pi/2``.
    """
    beta = _check_beta(beta)
    if spec.kind == "symmetric":
        b = math.fmod(beta, spec.alpha)
        return 1 if b < 0.5 * spec.alpha else 2
    if spec.kind == "quasi_symmetric":
        half = 1 if beta >= math.pi else 0
        b = beta - math.pi if half else beta
        return 2 * half + (1 if b < 0.5 * math.pi else 2)
    raise SymmetryDomainError(f"no regions for kind {spec.kind!r}")


def region_actions(region, spec: SymmetrySpec):
    """``(mirror, add_half_turn)`` implied by a region label."""
    if spec.kind == "symmetric":
        if region not in (1, 2):
            raise SymmetryDomainError(f"region {region} invalid for symmetric objects")
        return region == 2, False
    if spec.kind == "quasi_symmetric":
        if region not in (1, 2, 3, 4):
            raise SymmetryDomainError(f"region {region} invalid for quasi-symmetric objects")
        return region in (2, 4), region in (3, 4)
    return False, False


def fold_rotation(beta, spec: SymmetrySpec) -> FoldResult:
    """Map the axis angle ``beta`` into the trained range ``[0, alpha/2]``.

    The mirror map sends ``[alpha/2, alpha)`` onto ``(0, alpha/2]``, so
    the closed end ``alpha/2`` is reached by ``beta = alpha/2`` only.
    """
    if spec.kind == "revolution":
        if not math.isfinite(float(beta)):
            raise SymmetryDomainError("beta must be finite")
        return FoldResult(0.0)
    if spec.kind == "asymmetric":
        return FoldResult(_check_beta(beta))
    region = classify_region(beta, spec)
    mirror, add = region_actions(region, spec)
    if spec.kind == "symmetric":
        alpha = spec.alpha
        b = math.fmod(beta, alpha)
    else:
        alpha = math.pi
        b = beta - math.pi if add else beta
    if mirror:
        b = alpha - b
    return FoldResult(b, mirror, add, region)


def unfold_rotation(fr: FoldResult, spec: SymmetrySpec):
    """Inverse of :func:`fold_rotation` modulo the symmetry.

    Exact for symmetric objects modulo ``alpha`` and for quasi-symmetric
    objects modulo ``2*pi``.
    """
    if spec.kind == "revolution":
        return 0.0
    if spec.kind == "asymmetric":
        return fr.beta_canonical
    alpha = spec.alpha
    b = alpha - fr.beta_canonical if fr.mirror else fr.beta_canonical
    if fr.add_half_turn:
        b = b + math.pi
    return b


def mirror_points_x(points, cx):
    """Mirror pixels left-right about the column ``x = cx``."""
    P = np.array(points, dtype=float).reshape(-1, 2)
    P[:, 0] = 2.0 * cx - P[:, 0]
    return P


def corner_permutation_under_mirror(box: BoxCorners3D | None = None):
    """Index permutation relating box corners before and after mirroring.

    Mirroring swaps the min-x and max-x corners, i.e. flips bit 0 of the
    corner index. The permutation is an involution.
    """
    return np.arange(8) ^ 1


def unmirror_correspondences(points, box: BoxCorners3D, cx, direction="vertical"):
    """Mirror predicted corners back and pair them with object points.

    Corners predicted on a left-right mirrored image are mirrored about
    ``cx`` and re-indexed with :func:`corner_permutation_under_mirror`.
    The matching object points are the reflected, permuted corners, which
    coincide with the original corners when the box is centered in x.

    :return: ``(image_points, object_points)``, both in corner order.
    """
    if direction != "vertical":
        raise NotImplementedError("only left-right (vertical-axis) mirroring is implemented")
    perm = corner_permutation_under_mirror(box)
    m = mirror_points_x(points, cx)[perm]
    M = box.corners[perm] @ MIRROR_X
    return m, M


def swing_twist(R, axis):
    """Split ``R = swing @ Rot(axis, beta)`` with the swing axis orthogonal to ``axis``.

    :return: ``(swing, beta)`` with ``beta`` in ``[0, 2*pi)``.
    """
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    e = rot_log(R)
    theta = np.linalg.norm(e)
    w = math.cos(0.5 * theta)
    v = e * (math.sin(0.5 * theta) / theta) if theta > 0 else np.zeros(3)
    beta = reduce_angle(2.0 * math.atan2(float(v @ axis), w))
    swing = R @ rot_axis_angle(axis, -beta)
    return swing, beta


def twist_angle(R, axis):
    """Rotation angle about the object-frame ``axis`` in ``[0, 2*pi)``."""
    return swing_twist(R, axis)[1]


def with_twist(R, axis, beta):
    """Replace the twist of ``R`` about ``axis`` by ``beta``."""
    swing, _ = swing_twist(R, axis)
    return swing @ rot_axis_angle(axis, beta)


def pose_beta(pose: Pose, spec: SymmetrySpec):
    return twist_angle(pose.R, spec.axis)


def apply_half_turn(pose: Pose, spec: SymmetrySpec) -> Pose:
    """Compose with a half turn about the symmetry axis (object frame)."""
    return pose.compose_object(rot_axis_angle(spec.axis, math.pi))


def axis_tilt(pose: Pose, spec: SymmetrySpec):
    """Angle [rad] between the camera-frame symmetry axis and the image vertical."""
    a = pose.R @ spec.axis
    return float(np.arccos(min(1.0, abs(a[1]))))


class GroundTruthClassifier:
    """Region classifier reading the angle off the ground-truth pose."""

    def __init__(self, specs):
        self.specs = specs

    def region(self, frame_id, object_id, gt_pose: Pose):
        spec = self.specs[object_id]
        if spec.kind not in ("symmetric", "quasi_symmetric"):
            return None
        return classify_region(pose_beta(gt_pose, spec), spec)


class FileRegionClassifier:
    """Region labels read from JSON lines ``{"frame": id, "region": n}``."""

    def __init__(self, labels):
        self.labels = dict(labels)

    @classmethod
    def from_file(cls, path):
        labels = {}
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    labels[rec["frame"]] = int(rec["region"])
                except (ValueError, KeyError, TypeError) as exc:
                    raise FormatError(f"{path}:{lineno}: {exc}") from exc
        return cls(labels)

    def region(self, frame_id, object_id, gt_pose=None):
        return self.labels.get(frame_id)
