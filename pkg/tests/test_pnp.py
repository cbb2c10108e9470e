import math

import numpy as np
import pytest

from cornerpose.errors import DegenerateConfigurationError, DivergenceError, TooFewPointsError
from cornerpose.geometry import BoxCorners3D, Pose, project_points, rotation_angle
from cornerpose.metrics import metric_5cm5deg
from cornerpose.pnp import (
    Correspondences,
    _residuals,
    refine_pnp,
    reprojection_jacobian,
    reprojection_rms,
    solve_pnp,
    solve_pnp_dlt,
)

from conftest import random_pose


def corrs(K, pose, box, noise=0.0, rng=None):
    m = project_points(K, pose, box.corners)
    if noise:
        m = m + noise * rng.standard_normal(m.shape)
    return Correspondences(box.corners, m, K)


def pose_errors(a, b):
    return rotation_angle(a.R @ b.R.T), float(np.linalg.norm(a.t - b.t))


def test_dlt_noiseless_round_trip(K, box, rng):
    for _ in range(200):
        gt = random_pose(rng)
        est = solve_pnp_dlt(corrs(K, gt, box))
        r, t = pose_errors(est, gt)
        assert r < 1e-6 and t < 1e-6


def test_dlt_too_few_points(K, box):
    c = Correspondences(box.corners[:5], np.zeros((5, 2)), K)
    with pytest.raises(TooFewPointsError):
        solve_pnp_dlt(c)


def test_dlt_coplanar_points(K):
    M = np.array([[x, y, 0.0] for x in (-0.1, 0.0, 0.1) for y in (-0.1, 0.1)] + [[0.05, 0.0, 0.0], [-0.05, 0.03, 0.0]])
    m = project_points(K, Pose.identity([0, 0, 1]), M)
    with pytest.raises(DegenerateConfigurationError):
        solve_pnp_dlt(Correspondences(M, m, K))


def test_refine_fixed_point_at_truth(K, box, rng):
    gt = random_pose(rng)
    assert refine_pnp(gt, corrs(K, gt, box)) is gt


def test_jacobian_matches_central_differences(K, box, rng):
    for _ in range(50):
        gt = random_pose(rng)
        c = corrs(K, gt, box, 1.0, rng)
        x = np.concatenate([gt.e, gt.t])
        J = reprojection_jacobian(x, c)
        h = 1e-6
        Jfd = np.empty_like(J)
        for k in range(6):
            dx = np.zeros(6)
            dx[k] = h
            Jfd[:, k] = (_residuals(x + dx, c) - _residuals(x - dx, c)) / (2 * h)
        assert np.max(np.abs(J - Jfd)) < 1e-5


def test_jacobian_small_angle_branch(K, box):
    x = np.array([1e-7, -2e-7, 0.0, 0.01, 0.02, 1.0])
    c = Correspondences(box.corners, np.zeros((8, 2)), K)
    J = reprojection_jacobian(x, c)
    h = 1e-6
    for k in range(6):
        dx = np.zeros(6)
        dx[k] = h
        col = (_residuals(x + dx, c) - _residuals(x - dx, c)) / (2 * h)
        assert np.max(np.abs(J[:, k] - col)) < 1e-5


def test_refine_never_increases_rms(K, box, rng):
    for _ in range(100):
        gt = random_pose(rng)
        c = corrs(K, gt, box, 2.0, rng)
        init = solve_pnp_dlt(c)
        assert reprojection_rms(refine_pnp(init, c), c) <= reprojection_rms(init, c)


def test_noisy_rms_bound(K, box, rng):
    rms = []
    for _ in range(500):
        gt = random_pose(rng)
        c = corrs(K, gt, box, 1.0, rng)
        rms.append(reprojection_rms(solve_pnp(c), c))
    # 16 residuals, 6 parameters: E[rms^2] = (16 - 6) / 8 per point
    assert np.mean(rms) <= 1.2
    assert np.mean(rms) == pytest.approx(math.sqrt(10 / 8), rel=0.1)


def test_identity_pose_cube(K):
    cube = BoxCorners3D.from_bounds([-0.05] * 3, [0.05] * 3)
    gt = Pose.identity([0, 0, 1])
    est = solve_pnp(corrs(K, gt, cube))
    np.testing.assert_allclose(est.e, 0, atol=1e-6)
    np.testing.assert_allclose(est.t, gt.t, atol=1e-6)


def test_noiseless_round_trip_1000(K, box, rng):
    worst_r = worst_t = 0.0
    for _ in range(1000):
        gt = random_pose(rng)
        r, t = pose_errors(solve_pnp(corrs(K, gt, box)), gt)
        worst_r, worst_t = max(worst_r, r), max(worst_t, t)
    assert math.degrees(worst_r) < 0.01
    assert worst_t < 1e-4


def test_2px_noise_passes_5cm5deg(K, box, rng):
    # measured rate is recorded in the acceptance output; here only the bound
    passes = 0
    for _ in range(1000):
        gt = random_pose(rng, depth=(1.0, 1.0), spread=0.0)
        passes += metric_5cm5deg(solve_pnp(corrs(K, gt, box, 2.0, rng)), gt).passed
    assert passes >= 950


def test_deterministic(K, box, rng):
    gt = random_pose(rng)
    c = corrs(K, gt, box, 1.0, rng)
    a, b = solve_pnp(c), solve_pnp(c)
    assert np.array_equal(a.e, b.e) and np.array_equal(a.t, b.t)


def test_refine_rejects_init_behind_camera(K, box):
    c = corrs(K, Pose.identity([0, 0, 1]), box)
    with pytest.raises(DivergenceError):
        refine_pnp(Pose.identity([0, 0, -1]), c)
