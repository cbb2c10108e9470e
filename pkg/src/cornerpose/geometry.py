"""Rigid transforms, exponential-map rotations and pinhole projection.

Conventions used throughout the package:

* a rotation is stored as an axis-angle 3-vector ``e`` (radians) on the
  canonical branch ``|e| <= pi``;
* a pose maps object-frame points into the camera frame, ``X = R(e) M + t``;
* the camera is a zero-skew pinhole without distortion, and pixel ``(i, j)``
  samples the continuous image coordinate ``(i, j)``;
* lengths are meters and angles radians; conversion to centimeters or
  degrees happens only at I/O boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.distance import pdist

from .errors import BehindCameraError, MeshError

#: Points with camera-frame depth at or below this are "behind the camera".
MIN_DEPTH = 1e-9

#: Reflection of the camera frame that corresponds to mirroring the image
#: left-right about the principal point.
MIRROR_X = np.diag([-1.0, 1.0, 1.0])

_SMALL_ANGLE = 1e-8


def skew(v):
    """Cross-product matrix ``[v]x`` such that ``skew(v) @ w == cross(v, w)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rot_from_expmap(e):
    """Rotation matrix of an axis-angle vector (Rodrigues' formula).

    :param e: 3-vector whose direction is the axis and norm the angle [rad].
    :return: 3x3 rotation matrix. The zero vector maps to the identity.
    """
    e = np.asarray(e, dtype=float).reshape(3)
    theta = float(np.linalg.norm(e))
    K = skew(e)
    if theta < _SMALL_ANGLE:
        return np.eye(3) + K + 0.5 * (K @ K)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * K + b * (K @ K)


def rot_log(R):
    """Inverse of :func:`rot_from_expmap`, returning ``e`` with ``|e| <= pi``.

    At exactly ``pi`` the sign of the axis is ambiguous; the returned axis
    has its largest-magnitude component positive.
    """
    R = np.asarray(R, dtype=float)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    s = 0.5 * np.linalg.norm(w)
    c = 0.5 * (np.trace(R) - 1.0)
    theta = float(np.arctan2(s, c))
    if theta < _SMALL_ANGLE:
        return 0.5 * w
    if theta < np.pi - 1e-2:
        return theta / (2.0 * np.sin(theta)) * w
    # near pi the antisymmetric part vanishes; read the axis off R + R^T
    B = 0.5 * (R + R.T) - np.cos(theta) * np.eye(3)
    k = int(np.argmax(np.diag(B)))
    u = B[k] / np.sqrt(B[k, k])
    u /= np.linalg.norm(u)
    d = float(u @ w)
    if d < 0 or (d == 0 and u[int(np.argmax(np.abs(u)))] < 0):
        u = -u
    return theta * u


def rotation_angle(R):
    """Geodesic angle of a rotation matrix in ``[0, pi]``."""
    c = np.clip(0.5 * (np.trace(R) - 1.0), -1.0, 1.0)
    return float(np.arccos(c))


def rot_axis_angle(axis, angle):
    """Rotation by ``angle`` about the (not necessarily unit) ``axis``."""
    axis = np.asarray(axis, dtype=float)
    return rot_from_expmap(axis / np.linalg.norm(axis) * angle)


def nearest_rotation(A):
    """Closest rotation to ``A`` in Frobenius norm (orthogonal polar factor).

    :return: ``(R, singular_values)``.
    """
    U, S, Vt = np.linalg.svd(A)
    D = np.eye(3)
    D[2, 2] = np.sign(np.linalg.det(U @ Vt)) or 1.0
    return U @ D @ Vt, S


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid object-to-camera transform ``X = R(e) M + t``."""

    e: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        e = np.array(self.e, dtype=float).reshape(3)
        t = np.array(self.t, dtype=float).reshape(3)
        if not (np.all(np.isfinite(e)) and np.all(np.isfinite(t))):
            raise ValueError("pose components must be finite")
        theta = np.linalg.norm(e)
        if theta > np.pi:
            # bring onto the canonical branch
            e = rot_log(rot_from_expmap(e))
        e.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls, t=(0.0, 0.0, 0.0)):
        return cls(np.zeros(3), t)

    @classmethod
    def from_matrix(cls, R, t):
        return cls(rot_log(R), t)

    @property
    def R(self):
        return rot_from_expmap(self.e)

    def matrix(self):
        """4x4 homogeneous transform."""
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.t
        return T

    def transform(self, points):
        """Map object-frame points (n, 3) into the camera frame."""
        P = np.asarray(points, dtype=float).reshape(-1, 3)
        return P @ self.R.T + self.t

    def compose_object(self, R_obj):
        """Pose ``self o R_obj``: rotate in the object frame first."""
        return Pose.from_matrix(self.R @ R_obj, self.t)

    def as_dict(self):
        return {"e": [float(v) for v in self.e], "t": [float(v) for v in self.t]}

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return bool(np.array_equal(self.e, other.e) and np.array_equal(self.t, other.t))

    def __hash__(self):
        return hash((self.e.tobytes(), self.t.tobytes()))

    def __repr__(self):
        return f"Pose(e={self.e.tolist()}, t={self.t.tolist()})"


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def K(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def scaled(self, width, height):
        """Intrinsics of the same camera resampled to ``width x height``."""
        sx = width / self.width
        sy = height / self.height
        return CameraIntrinsics(self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy, width, height)

    def as_dict(self):
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}


@dataclass(frozen=True, eq=False)
class MeshModel:
    """Triangle mesh in the object frame (meters).

    Construction checks index bounds, a positive diameter and, unless
    ``allow_planar`` is set, that the vertices span 3D.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    name: str = "object"
    allow_planar: bool = field(default=False, repr=False)

    def __post_init__(self):
        V = np.array(self.vertices, dtype=float).reshape(-1, 3)
        F = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(V) < 2:
            raise MeshError("mesh needs at least two vertices")
        if not np.all(np.isfinite(V)):
            raise MeshError("non-finite vertex coordinates")
        if F.size and (F.min() < 0 or F.max() >= len(V)):
            raise MeshError("triangle index out of range")
        if not self.allow_planar:
            if len(V) < 4:
                raise MeshError("mesh needs at least 4 non-coplanar vertices")
            sv = np.linalg.svd(V - V.mean(axis=0), compute_uv=False)
            if sv[2] <= 1e-9 * sv[0]:
                raise MeshError("mesh vertices are coplanar")
        V.setflags(write=False)
        F.setflags(write=False)
        object.__setattr__(self, "vertices", V)
        object.__setattr__(self, "triangles", F)
        if diameter(V) <= 0:
            raise MeshError("mesh diameter must be positive")


@dataclass(frozen=True, eq=False)
class BoxCorners3D:
    """The 8 corners of an axis-aligned box.

    Corner ``i`` takes the max bound on x when bit 0 of ``i`` is set, on y
    for bit 1 and on z for bit 2, otherwise the min bound.
    """

    corners: np.ndarray

    def __post_init__(self):
        C = np.array(self.corners, dtype=float).reshape(8, 3)
        C.setflags(write=False)
        object.__setattr__(self, "corners", C)

    @classmethod
    def from_bounds(cls, lo, hi):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        idx = np.arange(8)
        bits = np.stack([(idx >> k) & 1 for k in range(3)], axis=1).astype(bool)
        return cls(np.where(bits, hi, lo))

    @property
    def lo(self):
        return self.corners[0]

    @property
    def hi(self):
        return self.corners[7]

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi)


def _as_vertices(mesh):
    if isinstance(mesh, MeshModel):
        return mesh.vertices
    return np.asarray(mesh, dtype=float).reshape(-1, 3)


def bbox_corners(mesh):
    """Axis-aligned bounding box of the vertices, in canonical corner order."""
    V = _as_vertices(mesh)
    return BoxCorners3D.from_bounds(V.min(axis=0), V.max(axis=0))


def diameter(mesh):
    """Maximum pairwise distance between vertices [m].

    The maximum is attained between convex-hull vertices, so large clouds
    are reduced to their hull first.
    """
    V = _as_vertices(mesh)
    if len(V) < 2:
        raise MeshError("diameter needs at least two vertices")
    if len(V) > 64:
        try:
            V = V[np.sort(ConvexHull(V).vertices)]
        except QhullError:
            pass
    return float(pdist(V).max())


def project_points(K: CameraIntrinsics, pose: Pose, points):
    """Project object-frame points to pixels, (n, 3) -> (n, 2).

    :raises BehindCameraError: if any point has camera depth <= 1e-9.
    """
    X = pose.transform(points)
    Z = X[:, 2]
    if np.any(Z <= MIN_DEPTH):
        raise BehindCameraError(f"{int(np.sum(Z <= MIN_DEPTH))} point(s) behind the camera")
    u = K.fx * X[:, 0] / Z + K.cx
    v = K.fy * X[:, 1] / Z + K.cy
    return np.stack([u, v], axis=1)


def project(K: CameraIntrinsics, pose: Pose, M):
    """Project a single object-frame point, returning a pixel 2-vector."""
    return project_points(K, pose, np.asarray(M, dtype=float).reshape(1, 3))[0]


def reflect_pose_x(pose: Pose, K: CameraIntrinsics | None = None) -> Pose:
    """Camera-frame counterpart of mirroring the image about ``x = cx``.

    Returns the pose ``(F R F, F t)`` with ``F = diag(-1, 1, 1)``. Since
    ``F R(e) F = R(-F e)`` the axis-angle form is exact. For any object point
    ``M``::

        mirror_points_x(project(K, pose, F M), cx) == project(K, reflect_pose_x(pose), M)

    so for an object symmetric under ``x -> -x`` the mirrored image of the
    object is the image of the object seen from the reflected pose. ``K`` is
    accepted for API symmetry; the reflection does not depend on it.
    """
    e = pose.e
    t = pose.t
    return Pose(np.array([e[0], -e[1], -e[2]]), np.array([-t[0], t[1], t[2]]))
