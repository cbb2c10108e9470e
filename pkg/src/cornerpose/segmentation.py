"""Coarse-to-fine segmentation post-processing and 2D object centers.

Score maps live on the 512x384 working image: the coarse grid has 32x24
cells of 16x16 px, the fine grid 64x48 cells of 8x8 px. Arrays are indexed
``[row, column]``, so a coarse map has shape ``(24, 32)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import EmptyMaskError, FormatError

WORK_WIDTH, WORK_HEIGHT = 512, 384
COARSE_SHAPE = (24, 32)
FINE_SHAPE = (48, 64)
COARSE_PITCH = 16
FINE_PITCH = 8

_FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True, eq=False)
class DetectionResult:
    """Per-object detection.

    ``mask`` is the refined 48x64 mask (empty when absent); ``center`` is in
    working-image pixels, or ``None`` when the object is absent.
    """

    object_id: object
    present: bool
    mask: np.ndarray
    center: np.ndarray | None
    coarse_mask: np.ndarray | None = None


def _check_shape(grid, shape, what):
    g = np.asarray(grid)
    if g.shape != shape:
        raise FormatError(f"{what} must have shape {shape}, got {g.shape}")
    return g


def binarize(scores, tau):
    """Cells whose score is strictly above ``tau``."""
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    return np.asarray(scores, dtype=float) > tau


def label_components(mask):
    """4-connected component labels and sizes; labels follow row-major order
    of each component's first cell."""
    labels, n = ndimage.label(np.asarray(mask, dtype=bool), structure=_FOUR_CONNECTED)
    sizes = np.bincount(labels.ravel(), minlength=n + 1)[1:]
    return labels, sizes


def largest_component(mask):
    """Keep only the largest 4-connected component.

    Ties go to the component containing the smallest row-major cell index.
    """
    labels, sizes = label_components(mask)
    if sizes.size == 0:
        return np.zeros_like(np.asarray(mask, dtype=bool))
    return labels == int(np.argmax(sizes)) + 1


def presence(mask, min_cells=2):
    """Whether the largest component has at least ``min_cells`` cells."""
    if min_cells < 1:
        raise ValueError("min_cells must be >= 1")
    _, sizes = label_components(mask)
    return bool(sizes.size) and int(sizes.max()) >= min_cells


def upsample_mask(coarse_mask):
    """Each coarse cell becomes a 2x2 block of fine cells."""
    c = np.asarray(coarse_mask, dtype=bool)
    return np.repeat(np.repeat(c, 2, axis=0), 2, axis=1)


def refine(coarse_mask, fine_scores, tau2):
    """Fine cells active where the parent coarse cell is active and the fine
    score exceeds ``tau2``."""
    c = _check_shape(coarse_mask, COARSE_SHAPE, "coarse mask")
    f = _check_shape(fine_scores, FINE_SHAPE, "fine scores")
    return upsample_mask(c) & binarize(f, tau2)


def centroid(mask, pitch=FINE_PITCH):
    """Mean of active cell centers; cell ``(c, r)`` is centered at
    ``(pitch*c + pitch/2, pitch*r + pitch/2)`` px."""
    m = np.asarray(mask, dtype=bool)
    rows, cols = np.nonzero(m)
    if rows.size == 0:
        raise EmptyMaskError("centroid of an empty mask")
    half = 0.5 * pitch
    return np.array([pitch * cols.mean() + half, pitch * rows.mean() + half])


def detect(coarse_scores, fine_scores=None, tau1=0.5, tau2=0.5, min_cells=2,
           object_id=None, scale=(1.0, 1.0)):
    """Full post-processing for one object.

    Binarize the coarse map, keep its largest component, test presence,
    gate and binarize the fine map, and return the centroid. ``scale``
    multiplies the center to map it back to native image resolution.
    A missing fine map is allowed only when the object comes out absent.
    """
    coarse = _check_shape(coarse_scores, COARSE_SHAPE, "coarse scores")
    comp = largest_component(binarize(coarse, tau1))
    empty = np.zeros(FINE_SHAPE, dtype=bool)
    if not presence(comp, min_cells):
        return DetectionResult(object_id, False, empty, None, comp)
    if fine_scores is None:
        raise FormatError("fine score map required for a present object")
    fine = refine(comp, fine_scores, tau2)
    if not fine.any():
        return DetectionResult(object_id, False, empty, None, comp)
    center = centroid(fine) * np.asarray(scale, dtype=float)
    return DetectionResult(object_id, True, fine, center, comp)
