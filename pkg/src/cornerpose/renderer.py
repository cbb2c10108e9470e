"""Software rasterizer producing binary silhouette masks.

Pixel ``(i, j)`` (column, row) is sampled at the continuous image point
``(i, j)``, the same coordinates :func:`~cornerpose.geometry.project_points`
returns. Coverage uses edge functions with a top-left fill rule, so pixels
on an edge shared by two triangles are counted exactly once. Triangles with
a vertex at or in front of the near plane are discarded, not clipped, and
no face culling is done.
"""

from __future__ import annotations

import numpy as np

from .errors import EmptyMaskError, RenderError
from .geometry import CameraIntrinsics, MeshModel, Pose

NEAR_PLANE = 0.01


def _edge_inside(ax, ay, bx, by, px, py):
    dx = bx - ax
    dy = by - ay
    E = dx * (py - ay) - dy * (px - ax)
    if dy < 0 or (dy == 0 and dx > 0):  # top or left edge
        return E >= 0
    return E > 0


def rasterize_triangles(tri2d, width, height, out=None):
    """OR the coverage of 2D triangles (n, 3, 2) into a ``height x width`` mask."""
    mask = np.zeros((height, width), dtype=bool) if out is None else out
    for tri in np.asarray(tri2d, dtype=float):
        (ax, ay), (bx, by), (cx, cy) = tri
        area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area == 0 or not np.isfinite(area):
            continue
        if area < 0:
            bx, by, cx, cy = cx, cy, bx, by
        x0 = max(int(np.ceil(min(ax, bx, cx))), 0)
        x1 = min(int(np.floor(max(ax, bx, cx))), width - 1)
        y0 = max(int(np.ceil(min(ay, by, cy))), 0)
        y1 = min(int(np.floor(max(ay, by, cy))), height - 1)
        if x0 > x1 or y0 > y1:
            continue
        px = np.arange(x0, x1 + 1, dtype=float)[None, :]
        py = np.arange(y0, y1 + 1, dtype=float)[:, None]
        inside = (_edge_inside(ax, ay, bx, by, px, py)
                  & _edge_inside(bx, by, cx, cy, px, py)
                  & _edge_inside(cx, cy, ax, ay, px, py))
        mask[y0:y1 + 1, x0:x1 + 1] |= inside
    return mask


def render_mask(mesh: MeshModel, pose: Pose, K: CameraIntrinsics):
    """Binary silhouette (``height x width``, bool) of ``mesh`` seen from ``pose``.

    :raises RenderError: if the mesh has no triangles or none lies fully in
        front of the near plane.
    """
    if len(mesh.triangles) == 0:
        raise RenderError("mesh has no triangles")
    X = pose.transform(mesh.vertices)
    F = mesh.triangles
    keep = np.all(X[F, 2] > NEAR_PLANE, axis=1)
    if not keep.any():
        raise RenderError("no triangle lies in front of the near plane")
    Z = X[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = np.stack([K.fx * X[:, 0] / Z + K.cx, K.fy * X[:, 1] / Z + K.cy], axis=1)
    return rasterize_triangles(uv[F[keep]], K.width, K.height)


def mask_visible_fraction(mask, occluded):
    """Fraction of ``mask`` pixels not covered by ``occluded``."""
    m = np.asarray(mask, dtype=bool)
    o = np.asarray(occluded, dtype=bool)
    if m.shape != o.shape:
        raise ValueError("mask and occluder shapes differ")
    total = int(m.sum())
    if total == 0:
        raise EmptyMaskError("visible fraction of an empty mask")
    return float((m & ~o).sum()) / total


def write_pgm(path, mask):
    """Write a mask as binary PGM (P5, maxval 255, values 0/255)."""
    m = np.asarray(mask, dtype=bool)
    h, w = m.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write((m.astype(np.uint8) * 255).tobytes())


def read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM file")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval > 255:
        raise ValueError("16-bit PGM not supported")
    pix = np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)
    return pix > 0
