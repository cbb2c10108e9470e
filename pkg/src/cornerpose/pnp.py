"""Pose from 2D-3D correspondences: linear DLT followed by Levenberg-Marquardt.

With eight well-spread, non-coplanar box corners the direct linear transform
is stable; the nonlinear stage then minimizes the pixel reprojection error
over the 6 pose parameters ``(e, t)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConfigurationError, DivergenceError, TooFewPointsError
from .geometry import MIN_DEPTH, CameraIntrinsics, Pose, nearest_rotation, rot_from_expmap, skew

log = logging.getLogger(__name__)

#: Settings echoed into evaluation reports.
PNP_SETTINGS = {
    "method": "DLT + Levenberg-Marquardt",
    "lm_lambda0": 1e-3,
    "lm_lambda_up": 10.0,
    "lm_lambda_down": 10.0,
    "lm_max_iterations": 100,
    "lm_step_tol": 1e-10,
    "lm_grad_tol": 1e-10,
}

_LAMBDA_MAX = 1e16


@dataclass(frozen=True, eq=False)
class Correspondences:
    """Pairs of object-frame 3D points and observed pixels."""

    object_points: np.ndarray
    image_points: np.ndarray
    intrinsics: CameraIntrinsics

    def __post_init__(self):
        M = np.array(self.object_points, dtype=float).reshape(-1, 3)
        m = np.array(self.image_points, dtype=float).reshape(-1, 2)
        if len(M) != len(m):
            raise ValueError("object and image point counts differ")
        object.__setattr__(self, "object_points", M)
        object.__setattr__(self, "image_points", m)

    def __len__(self):
        return len(self.object_points)


def _left_jacobian(e):
    theta = float(np.linalg.norm(e))
    K = skew(e)
    if theta < 1e-5:
        return np.eye(3) + 0.5 * K + (1.0 / 6.0) * (K @ K)
    t2 = theta * theta
    return (np.eye(3) + (1.0 - np.cos(theta)) / t2 * K
            + (theta - np.sin(theta)) / (t2 * theta) * (K @ K))


def _camera_points(x, M):
    return M @ rot_from_expmap(x[:3]).T + x[3:]


def _residuals(x, c: Correspondences):
    X = _camera_points(x, c.object_points)
    K = c.intrinsics
    u = K.fx * X[:, 0] / X[:, 2] + K.cx
    v = K.fy * X[:, 1] / X[:, 2] + K.cy
    return (np.stack([u, v], axis=1) - c.image_points).ravel()


def reprojection_jacobian(x, c: Correspondences):
    """Analytic Jacobian of the stacked residuals w.r.t. ``x = (e, t)``.

    Uses ``d(R(e) M)/de = -[R M]x J_l(e)`` with ``J_l`` the left Jacobian
    of SO(3). Rows alternate u, v per point.
    """
    e = np.asarray(x[:3], dtype=float)
    R = rot_from_expmap(e)
    RM = c.object_points @ R.T
    X = RM + x[3:]
    K = c.intrinsics
    iz = 1.0 / X[:, 2]
    n = len(X)
    dproj = np.zeros((n, 2, 3))
    dproj[:, 0, 0] = K.fx * iz
    dproj[:, 0, 2] = -K.fx * X[:, 0] * iz * iz
    dproj[:, 1, 1] = K.fy * iz
    dproj[:, 1, 2] = -K.fy * X[:, 1] * iz * iz
    Jl = _left_jacobian(e)
    dX_de = np.stack([-skew(p) @ Jl for p in RM])
    J = np.empty((n, 2, 6))
    J[:, :, :3] = dproj @ dX_de
    J[:, :, 3:] = dproj
    return J.reshape(2 * n, 6)


def reprojection_rms(pose: Pose, c: Correspondences):
    """Root-mean-square pixel distance between projected and observed points."""
    r = _residuals(np.concatenate([pose.e, pose.t]), c).reshape(-1, 2)
    return float(np.sqrt(np.mean(np.sum(r * r, axis=1))))


def solve_pnp_dlt(c: Correspondences) -> Pose:
    """Linear pose estimate from >= 6 non-coplanar correspondences.

    The 3x4 projection is estimated in normalized camera coordinates with a
    Hartley-style conditioning of the object points, then split into the
    nearest rotation (polar factor, det corrected) and a translation. The
    overall sign is chosen so the object centroid lies in front of the
    camera.
    """
    n = len(c)
    if n < 6:
        raise TooFewPointsError(f"DLT needs at least 6 correspondences, got {n}")
    M = c.object_points
    centroid = M.mean(axis=0)
    D = M - centroid
    sv = np.linalg.svd(D, compute_uv=False)
    if sv[0] == 0 or sv[2] <= 1e-9 * sv[0]:
        raise DegenerateConfigurationError("object points are coplanar")
    scale = np.sqrt(3.0) / np.sqrt(np.mean(np.sum(D * D, axis=1)))
    Mn = D * scale

    K = c.intrinsics
    x = (c.image_points[:, 0] - K.cx) / K.fx
    y = (c.image_points[:, 1] - K.cy) / K.fy
    Mh = np.hstack([Mn, np.ones((n, 1))])
    A = np.zeros((2 * n, 12))
    A[0::2, 0:4] = Mh
    A[0::2, 8:12] = -x[:, None] * Mh
    A[1::2, 4:8] = Mh
    A[1::2, 8:12] = -y[:, None] * Mh
    _, S, Vt = np.linalg.svd(A)
    if S[-2] <= 1e-12 * S[0]:
        raise DegenerateConfigurationError("DLT design matrix is rank deficient")
    P = Vt[-1].reshape(3, 4)
    if P[2, 3] < 0:  # depth of the (normalized) centroid
        P = -P
    A3 = P[:, :3] * scale
    b = P[:, 3] - A3 @ centroid
    R, s = nearest_rotation(A3)
    t = b / s.mean()
    if (R @ centroid + t)[2] <= MIN_DEPTH:
        raise DegenerateConfigurationError("no solution places the object in front of the camera")
    return Pose.from_matrix(R, t)


def refine_pnp(init: Pose, c: Correspondences, max_iterations=100, step_tol=1e-10,
               grad_tol=1e-10, lambda0=1e-3) -> Pose:
    """Levenberg-Marquardt minimization of the summed squared reprojection error.

    Damping multiplies ``diag(J^T J)``; it starts at ``lambda0`` and is
    scaled by 10 down on accepted and up on rejected steps. A trial step
    that moves any point behind the camera is rejected.

    :raises DivergenceError: if damping cannot find a step that keeps all
        points in front of the camera.
    """
    x = np.concatenate([init.e, init.t]).astype(float)
    if np.any(_camera_points(x, c.object_points)[:, 2] <= MIN_DEPTH):
        raise DivergenceError("initial pose puts points behind the camera")
    r = _residuals(x, c)
    cost = float(r @ r)
    lam = lambda0
    moved = False
    for it in range(max_iterations):
        J = reprojection_jacobian(x, c)
        g = J.T @ r
        if np.linalg.norm(g) < grad_tol:
            break
        H = J.T @ J
        dH = np.diag(np.diag(H))
        accepted = False
        behind = False
        while lam <= _LAMBDA_MAX:
            try:
                step = np.linalg.solve(H + lam * dH, -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            if np.linalg.norm(step) < step_tol:
                break
            x_new = x + step
            if np.any(_camera_points(x_new, c.object_points)[:, 2] <= MIN_DEPTH):
                behind = True
                lam *= 10.0
                continue
            r_new = _residuals(x_new, c)
            cost_new = float(r_new @ r_new)
            if cost_new < cost:
                x, r, cost = x_new, r_new, cost_new
                lam /= 10.0
                accepted = moved = True
                break
            lam *= 10.0
        if not accepted:
            if behind and lam > _LAMBDA_MAX:
                raise DivergenceError("damping could not keep points in front of the camera")
            break
    log.debug("LM stopped after %d iterations, rms=%.3g", it + 1, np.sqrt(cost / len(c)))
    if not moved:
        return init
    return Pose(x[:3], x[3:])


def solve_pnp(c: Correspondences) -> Pose:
    """DLT initialization refined by Levenberg-Marquardt."""
    return refine_pnp(solve_pnp_dlt(c), c)
