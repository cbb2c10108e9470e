import numpy as np
import pytest

from cornerpose.errors import EmptyMaskError, RenderError
from cornerpose.geometry import CameraIntrinsics, MeshModel, Pose, project, reflect_pose_x
from cornerpose.renderer import (
    mask_visible_fraction,
    rasterize_triangles,
    read_pgm,
    render_mask,
    write_pgm,
)
from cornerpose.synth import box_mesh, plate_mesh, prism_mesh

from conftest import random_pose

PLATE_K = CameraIntrinsics(500, 500, 320, 240, 640, 480)


def test_plate_area():
    m = render_mask(plate_mesh(0.2), Pose.identity([0, 0, 1]), PLATE_K)
    assert abs(m.sum() - 10000) <= 200
    rows, cols = np.nonzero(m)
    assert cols.max() - cols.min() + 1 == 100 and rows.max() - rows.min() + 1 == 100


def test_plate_centroid_near_projected_center():
    for t in ([0, 0, 1], [0.1, -0.05, 1.3], [-0.2, 0.1, 2.0]):
        pose = Pose.identity(t)
        m = render_mask(plate_mesh(0.2), pose, PLATE_K)
        rows, cols = np.nonzero(m)
        c = project(PLATE_K, pose, [0, 0, 0])
        assert np.linalg.norm([cols.mean() - c[0], rows.mean() - c[1]]) < 1.0


def test_no_triangles():
    mesh = MeshModel([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], [])
    with pytest.raises(RenderError):
        render_mask(mesh, Pose.identity([0, 0, 2]), PLATE_K)


def test_behind_camera_raises():
    with pytest.raises(RenderError):
        render_mask(box_mesh([0.1, 0.1, 0.1]), Pose.identity([0, 0, -1]), PLATE_K)


def test_visible_fraction():
    m = render_mask(plate_mesh(0.2), Pose.identity([0, 0, 1]), PLATE_K)
    assert mask_visible_fraction(m, np.zeros_like(m)) == 1.0
    assert mask_visible_fraction(m, m) == 0.0
    left = np.zeros_like(m)
    left[:, :320] = True
    assert mask_visible_fraction(m, left) == pytest.approx(0.5, abs=0.02)
    with pytest.raises(EmptyMaskError):
        mask_visible_fraction(np.zeros_like(m), m)


def test_area_inverse_square_on_half_meter_grid():
    base = render_mask(plate_mesh(0.2), Pose.identity([0, 0, 1]), PLATE_K).sum()
    for z in (0.5, 1.0, 1.5, 2.0, 2.5, 3.0):
        area = render_mask(plate_mesh(0.2), Pose.identity([0, 0, z]), PLATE_K).sum()
        assert area == pytest.approx(base / z**2, rel=0.03)


def test_area_inverse_square_dense_is_quantized():
    """Point sampling cannot hold 3% at every depth: at 2.75 m the plate
    spans 36.4 px and covers 37 sample columns."""
    area = render_mask(plate_mesh(0.2), Pose.identity([0, 0, 2.75]), PLATE_K).sum()
    assert area == 37 * 37


def test_shared_edges_counted_once():
    # two triangles splitting a square along the diagonal through sample points
    tris = np.array([[[0, 0], [10, 0], [10, 10]], [[0, 0], [10, 10], [0, 10]]], float)
    a = rasterize_triangles(tris[:1], 16, 16)
    b = rasterize_triangles(tris[1:], 16, 16)
    assert not (a & b).any()
    assert (a | b).sum() == 100  # top-left rule: columns and rows 0..9


def test_mirror_consistency(rng):
    K = CameraIntrinsics(500, 500, 319.5, 240, 640, 480)
    for mesh in (prism_mesh(6, 0.06, 0.1), box_mesh([0.08, 0.12, 0.05])):
        for _ in range(20):
            pose = random_pose(rng, depth=(0.6, 2.0), spread=0.1)
            a = render_mask(mesh, pose, K)
            b = render_mask(mesh, reflect_pose_x(pose), K)
            np.testing.assert_array_equal(b, a[:, ::-1])


def test_pgm_round_trip(tmp_path, rng):
    m = rng.random((13, 17)) < 0.5
    p = tmp_path / "m.pgm"
    write_pgm(p, m)
    assert p.read_bytes().startswith(b"P5\n17 13\n255\n")
    np.testing.assert_array_equal(read_pgm(p), m)
