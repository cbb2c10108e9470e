from collections import deque

import numpy as np
import pytest

from cornerpose.errors import EmptyMaskError, FormatError
from cornerpose.segmentation import (
    COARSE_SHAPE,
    FINE_SHAPE,
    binarize,
    centroid,
    detect,
    label_components,
    largest_component,
    presence,
    refine,
    upsample_mask,
)


def flood_fill_largest(mask):
    """BFS oracle; scanning row-major makes the first-found component win ties."""
    h, w = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    best = []
    for r in range(h):
        for c in range(w):
            if not mask[r, c] or seen[r, c]:
                continue
            comp, queue = [], deque([(r, c)])
            seen[r, c] = True
            while queue:
                y, x = queue.popleft()
                comp.append((y, x))
                for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    yy, xx = y + dy, x + dx
                    if 0 <= yy < h and 0 <= xx < w and mask[yy, xx] and not seen[yy, xx]:
                        seen[yy, xx] = True
                        queue.append((yy, xx))
            if len(comp) > len(best):
                best = comp
    out = np.zeros_like(mask, dtype=bool)
    for y, x in best:
        out[y, x] = True
    return out


def test_largest_component_matches_flood_fill():
    rng = np.random.default_rng(3)
    for i in range(10_000):
        mask = rng.random(COARSE_SHAPE) < rng.uniform(0.05, 0.7)
        np.testing.assert_array_equal(largest_component(mask), flood_fill_largest(mask))


def test_sizes_five_and_three():
    m = np.zeros((6, 6), bool)
    m[0, :3] = True
    m[3:5, 2:5] = True
    m[4, 4] = False
    out = largest_component(m)
    assert out.sum() == 5 and not out[0].any()


def test_tie_break_is_row_major():
    m = np.zeros((6, 6), bool)
    m[4:6, 0:2] = True  # starts later in row-major order
    m[0:2, 4:6] = True
    out = largest_component(m)
    assert out[0, 4] and not out[4, 0]


def test_diagonal_cells_are_separate():
    m = np.eye(4, dtype=bool)
    _, sizes = label_components(m)
    assert list(sizes) == [1, 1, 1, 1]


def test_empty_in_empty_out():
    assert not largest_component(np.zeros(COARSE_SHAPE, bool)).any()


def test_binarize_strict():
    assert not binarize(np.zeros(COARSE_SHAPE), 0.5).any()
    assert not binarize(np.full((2, 2), 0.3), 0.3).any()
    rng = np.random.default_rng(0)
    s = rng.random(COARSE_SHAPE)
    np.testing.assert_array_equal(binarize(s, 0.4), np.vectorize(lambda v: v > 0.4)(s))
    with pytest.raises(ValueError):
        binarize(s, 1.0)


def test_presence():
    m = np.zeros(COARSE_SHAPE, bool)
    assert not presence(m)
    m[3, 3] = True
    assert not presence(m, 2)
    m[3:5, 3:5] = True
    assert presence(m, 2)
    with pytest.raises(ValueError):
        presence(m, 0)


def test_refine_gating():
    coarse = np.zeros(COARSE_SHAPE, bool)
    coarse[2, 3] = True
    fine = np.ones(FINE_SHAPE)
    out = refine(coarse, fine, 0.5)
    assert out.sum() == 4 and out[4:6, 6:8].all()
    rng = np.random.default_rng(1)
    c = rng.random(COARSE_SHAPE) < 0.3
    f = rng.random(FINE_SHAPE)
    oracle = np.array([[c[r // 2, q // 2] and f[r, q] > 0.6 for q in range(64)] for r in range(48)])
    np.testing.assert_array_equal(refine(c, f, 0.6), oracle)
    with pytest.raises(FormatError):
        refine(c.T, f, 0.5)


def test_centroid_examples():
    m = np.zeros(FINE_SHAPE, bool)
    m[5:7, 10:12] = True
    np.testing.assert_array_equal(centroid(m), [88.0, 48.0])
    single = np.zeros(FINE_SHAPE, bool)
    single[0, 0] = True
    np.testing.assert_array_equal(centroid(single), [4.0, 4.0])
    with pytest.raises(EmptyMaskError):
        centroid(np.zeros(FINE_SHAPE, bool))


def test_centroid_matches_direct_average():
    rng = np.random.default_rng(2)
    for _ in range(100):
        m = rng.random(FINE_SHAPE) < 0.2
        m[0, 0] = True
        pts = [(8 * c + 4, 8 * r + 4) for r in range(48) for c in range(64) if m[r, c]]
        np.testing.assert_allclose(centroid(m), np.mean(pts, axis=0), atol=1e-12)


def random_scores(rng):
    """Smooth blobs so components are non-trivial."""
    coarse = np.zeros(COARSE_SHAPE)
    yy, xx = np.mgrid[0:24, 0:32]
    for _ in range(rng.integers(1, 4)):
        cy, cx, s = rng.uniform(0, 24), rng.uniform(0, 32), rng.uniform(1.5, 5)
        coarse = np.maximum(coarse, np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s)))
    coarse = np.clip(coarse + 0.1 * rng.standard_normal(COARSE_SHAPE), 0, 1)
    fine = np.clip(upsample_mask(coarse > 0).astype(float) * rng.random(FINE_SHAPE), 0, 1)
    return coarse, fine


def test_threshold_monotonicity():
    rng = np.random.default_rng(4)
    for _ in range(1000):
        coarse, fine = random_scores(rng)
        t_lo, t_hi = np.sort(rng.uniform(0.05, 0.95, 2))
        lo, hi = binarize(coarse, t_lo), binarize(coarse, t_hi)
        assert not (hi & ~lo).any()
        assert largest_component(hi).sum() <= largest_component(lo).sum()
        # the higher-threshold component sits inside one component of the lower mask
        labels, _ = label_components(lo)
        assert len(np.unique(labels[largest_component(hi)])) <= 1
        # tau2 at fixed tau1: final masks nest
        a = detect(coarse, fine, 0.5, t_lo).mask
        b = detect(coarse, fine, 0.5, t_hi).mask
        assert not (b & ~a).any()
        assert not (a & ~upsample_mask(largest_component(binarize(coarse, 0.5)))).any()


def test_tau1_can_switch_component():
    """Raising tau1 can shrink one blob below another and move the mask."""
    coarse = np.zeros(COARSE_SHAPE)
    coarse[0:2, 0:3] = 0.6  # 6 cells, weak
    coarse[10:12, 10:12] = 0.9  # 4 cells, strong
    fine = np.ones(FINE_SHAPE)
    a = detect(coarse, fine, 0.5, 0.5).mask
    b = detect(coarse, fine, 0.7, 0.5).mask
    assert (b & ~a).any()


def test_translation_equivariance():
    rng = np.random.default_rng(5)
    for _ in range(50):
        coarse = np.zeros(COARSE_SHAPE)
        r, c = rng.integers(0, 20), rng.integers(0, 28)
        coarse[r:r + 3, c:c + 3] = rng.uniform(0.6, 1, (3, 3))
        fine = rng.uniform(0.6, 1, FINE_SHAPE)
        a = detect(coarse, fine)
        b = detect(np.roll(coarse, 1, axis=1), np.roll(fine, 2, axis=1))
        np.testing.assert_allclose(b.center - a.center, [16, 0], atol=1e-12)
        f = refine(largest_component(binarize(coarse, 0.5)), fine, 0.5)
        np.testing.assert_allclose(centroid(np.roll(f, 1, axis=0)) - centroid(f), [0, 8], atol=1e-12)


def test_detect_absent_and_scaled():
    res = detect(np.zeros(COARSE_SHAPE), None)
    assert not res.present and res.center is None and not res.mask.any()
    coarse = np.zeros(COARSE_SHAPE)
    coarse[2:4, 4:6] = 1.0
    res = detect(coarse, np.ones(FINE_SHAPE), object_id="a", scale=(1.25, 1.25))
    assert res.present and res.object_id == "a"
    np.testing.assert_allclose(res.center, [80 * 1.25, 48 * 1.25])
    labels, n = label_components(res.mask)
    assert len(n) == 1
    with pytest.raises(FormatError):
        detect(coarse, None)
