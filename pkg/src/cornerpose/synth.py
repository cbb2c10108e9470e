"""Synthetic ground truth: meshes, random poses, training-style windows,
occluders, noisy corner predictions and ideal score maps.

Every frame draws from its own random substream seeded by
``(seed, frame_id)``, so frames can be generated in any order or in
parallel with identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyMaskError, FormatError, RenderError, SamplingError
from .geometry import (
    BoxCorners3D,
    CameraIntrinsics,
    MeshModel,
    Pose,
    bbox_corners,
    diameter,
    project_points,
    reflect_pose_x,
    rot_axis_angle,
)
from .renderer import NEAR_PLANE, mask_visible_fraction, render_mask
from .segmentation import WORK_HEIGHT, WORK_WIDTH
from .symmetry import (
    SymmetrySpec,
    apply_half_turn,
    classify_region,
    pose_beta,
    region_actions,
    swing_twist,
)

VISIBILITY_THRESHOLD = 0.1


# -- synthetic objects --------------------------------------------------------

def box_mesh(size=(0.1, 0.1, 0.1), name="box"):
    """Closed axis-aligned box centered at the origin (12 triangles)."""
    half = 0.5 * np.asarray(size, dtype=float)
    V = BoxCorners3D.from_bounds(-half, half).corners
    F = [[0, 2, 1], [1, 2, 3], [4, 5, 6], [5, 7, 6],
         [0, 1, 4], [1, 5, 4], [2, 6, 3], [3, 6, 7],
         [0, 4, 2], [2, 4, 6], [1, 3, 5], [3, 7, 5]]
    return MeshModel(V, F, name)


def plate_mesh(side=0.2, name="plate"):
    """Square plate in the object z = 0 plane."""
    s = 0.5 * side
    V = [[-s, -s, 0.0], [s, -s, 0.0], [s, s, 0.0], [-s, s, 0.0]]
    return MeshModel(V, [[0, 1, 2], [0, 2, 3]], name, allow_planar=True)


def prism_mesh(n_sides, radius=0.05, height=0.1, name=None):
    """Regular prism around the object y axis.

    Rotations by ``2*pi/n_sides`` about y and the reflection ``x -> -x``
    both map the vertex set onto itself. Large ``n_sides`` approximates a
    cylinder.
    """
    phi = 2.0 * np.pi * np.arange(n_sides) / n_sides
    ring = np.stack([radius * np.sin(phi), np.zeros(n_sides), radius * np.cos(phi)], axis=1)
    top = ring + [0.0, 0.5 * height, 0.0]
    bot = ring - [0.0, 0.5 * height, 0.0]
    V = np.vstack([bot, top, [[0.0, -0.5 * height, 0.0], [0.0, 0.5 * height, 0.0]]])
    cb, ct = 2 * n_sides, 2 * n_sides + 1
    F = []
    for k in range(n_sides):
        j = (k + 1) % n_sides
        F += [[k, j, n_sides + k], [j, n_sides + j, n_sides + k], [cb, j, k], [ct, n_sides + k, n_sides + j]]
    return MeshModel(V, F, name or f"prism{n_sides}")


def irregular_mesh(size=0.1, n_points=14, seed=7, name="irregular"):
    """Convex polyhedron without rotational or mirror symmetry."""
    from scipy.spatial import ConvexHull

    rng = np.random.default_rng(seed)
    P = rng.uniform(-0.5, 0.5, size=(n_points, 3)) * size * np.array([1.0, 0.7, 0.5])
    hull = ConvexHull(P)
    used = np.unique(hull.simplices)
    remap = np.full(n_points, -1)
    remap[used] = np.arange(used.size)
    V = P[used] - P[used].mean(axis=0)
    return MeshModel(V, remap[hull.simplices], name)


def quasi_box_mesh(size=(0.1, 0.06, 0.1), bump=0.01, name="quasi_box"):
    """Box with a small pyramid on its +z face: symmetric under a half turn
    about y except for the bump, and mirror symmetric under ``x -> -x``."""
    box = box_mesh(size)
    hz = 0.5 * size[2]
    apex = len(box.vertices)
    V = np.vstack([box.vertices, [[0.0, 0.0, hz + bump]]])
    # corners of the +z face: 4, 5, 6, 7
    F = np.vstack([box.triangles, [[4, 5, apex], [5, 7, apex], [7, 6, apex], [6, 4, apex]]])
    return MeshModel(V, F, name)


# -- configuration ------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    """Sampling parameters.

    ``symmetry_range`` restricts the rotation about a symmetric object's
    axis: ``"full"`` (no restriction), ``"period"`` (``[0, alpha)``) or
    ``"canonical"`` (``[0, alpha/2)``).
    """

    seed: int = 0
    depth_range: tuple = (0.5, 1.5)
    max_rotation_deg: float = 180.0
    symmetry_range: str = "full"
    scale_range: tuple = (0.8, 1.2)
    max_shift_px: float = 8.0
    corner_noise_px: float = 0.0
    occluder_count: tuple = (0, 0)
    occluder_size: tuple = (0.1, 0.4)
    image_margin_px: float = 0.0
    max_draws: int = 1000

    def __post_init__(self):
        for name in ("depth_range", "scale_range", "occluder_count", "occluder_size"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} is empty")
        if self.depth_range[0] <= NEAR_PLANE:
            raise ValueError("depth range must lie beyond the near plane")
        if self.corner_noise_px < 0:
            raise ValueError("corner noise must be >= 0")
        if not 0 <= self.max_rotation_deg <= 180:
            raise ValueError("max_rotation_deg must lie in [0, 180]")
        if self.symmetry_range not in ("full", "period", "canonical"):
            raise ValueError("symmetry_range must be full, period or canonical")

    def as_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def frame_rng(seed, frame_id):
    """Independent generator for one frame."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), int(frame_id)]))


# -- poses --------------------------------------------------------------------

def random_rotation(rng, max_angle=math.pi):
    """Haar-uniform rotation, optionally truncated to angles <= ``max_angle``."""
    if max_angle >= math.pi:
        q = rng.standard_normal(4)
        q /= np.linalg.norm(q)
        w, v = q[0], q[1:]
        if w < 0:
            w, v = -w, -v
        s = np.linalg.norm(v)
        angle = 2.0 * math.atan2(s, w)
        axis = v / s if s > 0 else np.array([1.0, 0.0, 0.0])
        return rot_axis_angle(axis, angle)
    if max_angle <= 0:
        return np.eye(3)
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    # angle density of the Haar measure is proportional to sin^2(theta / 2)
    peak = math.sin(0.5 * max_angle) ** 2
    while True:
        theta = max_angle * rng.random()
        if rng.random() * peak <= math.sin(0.5 * theta) ** 2:
            return rot_axis_angle(axis, theta)


def restricted_twist_range(spec: SymmetrySpec | None, mode):
    """``(lo, hi)`` for the angle about the symmetry axis, or None."""
    if spec is None or mode == "full" or spec.kind == "asymmetric":
        return None
    if spec.kind == "revolution":
        return (0.0, 0.0)
    hi = spec.alpha if mode == "period" else 0.5 * spec.alpha
    return (0.0, hi)


def gen_pose(cfg: SynthConfig, rng, K: CameraIntrinsics, box: BoxCorners3D | None = None,
             spec: SymmetrySpec | None = None) -> Pose:
    """Random pose whose object origin projects inside the image.

    Rotation is Haar-uniform (optionally capped); with a symmetry spec and a
    restricted ``cfg.symmetry_range`` the angle about the axis is resampled
    uniformly in the restricted range. Translation is uniform in the slab of
    the view frustum between the configured depths. When ``box`` is given
    all its corners must also project inside the image.

    :raises SamplingError: after ``cfg.max_draws`` rejected draws.
    """
    z0, z1 = cfg.depth_range
    twist = restricted_twist_range(spec, cfg.symmetry_range)
    m = cfg.image_margin_px
    for _ in range(cfg.max_draws):
        R = random_rotation(rng, math.radians(cfg.max_rotation_deg))
        if twist is not None:
            swing, _ = swing_twist(R, spec.axis)
            lo, hi = twist
            beta = lo + (hi - lo) * rng.random()
            R = swing @ rot_axis_angle(spec.axis, beta)
        # volume-uniform depth: density proportional to z^2
        z = np.cbrt(z0 ** 3 + rng.random() * (z1 ** 3 - z0 ** 3)) if z1 > z0 else z0
        u = rng.uniform(0.0, K.width)
        v = rng.uniform(0.0, K.height)
        t = np.array([(u - K.cx) * z / K.fx, (v - K.cy) * z / K.fy, z])
        pose = Pose.from_matrix(R, t)
        if box is None:
            return pose
        X = pose.transform(box.corners)
        if np.any(X[:, 2] <= NEAR_PLANE):
            continue
        uv = project_points(K, pose, box.corners)
        if np.all((uv[:, 0] >= m) & (uv[:, 0] <= K.width - 1 - m)
                  & (uv[:, 1] >= m) & (uv[:, 1] <= K.height - 1 - m)):
            return pose
    raise SamplingError(f"no valid pose after {cfg.max_draws} draws")


def perturb_pose(pose: Pose, rng, max_angle_deg=15.0, max_rel_t=0.1) -> Pose:
    """Pose sampled around ``pose`` for refinement test cases.

    The rotation offset has a uniform axis and an angle uniform in
    ``[0, max_angle_deg]``; the translation offset is uniform in a ball of
    radius ``max_rel_t * |t|``.
    """
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    angle = math.radians(max_angle_deg) * rng.random()
    d = rng.standard_normal(3)
    d *= max_rel_t * np.linalg.norm(pose.t) * np.cbrt(rng.random()) / np.linalg.norm(d)
    return Pose.from_matrix(rot_axis_angle(axis, angle) @ pose.R, pose.t + d)


# -- windows ------------------------------------------------------------------

@dataclass(eq=False)
class SynthFrame:
    frame_id: int
    object_id: str
    gt_pose: Pose
    gt_corners: np.ndarray
    predicted_corners: np.ndarray
    visibility: float
    region: int | None = None
    scale: float = 1.0
    shift: np.ndarray = field(default_factory=lambda: np.zeros(2))
    mask: np.ndarray | None = None
    occluder_mask: np.ndarray | None = None
    coarse_scores: np.ndarray | None = None
    fine_scores: np.ndarray | None = None

    @property
    def filtered(self):
        """True when less than 10% of the object is visible."""
        return self.visibility < VISIBILITY_THRESHOLD

    def as_record(self):
        rec = {"frame": self.frame_id, "object": self.object_id,
               "gt": self.gt_pose.as_dict(),
               "corners": self.predicted_corners.tolist(),
               "visibility": self.visibility}
        if self.region is not None:
            rec["region"] = self.region
        return rec


def network_view_pose(pose: Pose, spec: SymmetrySpec | None, region):
    """Pose a corner predictor trained on the folded range effectively sees.

    Undoes the half turn for quasi-symmetric objects, then applies the
    image mirroring for mirrored regions.
    """
    if spec is None or region is None:
        return pose
    mirror, add = region_actions(region, spec)
    if add:
        pose = apply_half_turn(pose, spec)  # a half turn is its own inverse
    if mirror:
        pose = reflect_pose_x(pose)
    return pose


def occluder_masks(mesh: MeshModel, pose: Pose, K, mask, cfg: SynthConfig, rng, meshes=None):
    """Silhouettes of other objects pasted over the target.

    Each occluder is rendered at a random orientation, scaled so its image
    size is a ``cfg.occluder_size`` fraction of the target's, and centered
    on a random pixel of the target mask.
    """
    lo, hi = cfg.occluder_count
    n = int(rng.integers(lo, hi + 1))
    out = np.zeros((K.height, K.width), dtype=bool)
    ys, xs = np.nonzero(mask)
    if n == 0 or xs.size == 0:
        return out
    pool = list(meshes) if meshes else [mesh]
    d_obj = diameter(mesh)
    for _ in range(n):
        occ = pool[int(rng.integers(len(pool)))]
        frac = rng.uniform(*cfg.occluder_size)
        z = diameter(occ) * pose.t[2] / (frac * d_obj)
        k = int(rng.integers(xs.size))
        t = [(xs[k] - K.cx) * z / K.fx, (ys[k] - K.cy) * z / K.fy, z]
        occ_pose = Pose.from_matrix(random_rotation(rng), t)
        try:
            out |= render_mask(occ, occ_pose, K)
        except RenderError:  # occluder fully clipped by the near plane
            continue
    return out


def gen_window(mesh: MeshModel, pose: Pose, cfg: SynthConfig, rng, K: CameraIntrinsics,
               frame_id=0, object_id=None, spec: SymmetrySpec | None = None,
               occluders=None, occluder_meshes=None, score_maps=False) -> SynthFrame:
    """One synthetic frame around ``pose``.

    Predicted corners are the corners the folded-range predictor would see
    (mirrored and half-turned per the ground-truth region) plus i.i.d.
    Gaussian noise of ``cfg.corner_noise_px`` per coordinate. The window
    scale and center shift are drawn and recorded. ``occluders`` overrides
    the random occluder masks with an explicit list.

    With ``score_maps`` the frame also carries ideal coarse/fine score maps
    from a render in the 512x384 working camera.
    """
    box = bbox_corners(mesh)
    gt = project_points(K, pose, box.corners)
    region = None
    if spec is not None and spec.kind in ("symmetric", "quasi_symmetric"):
        region = classify_region(pose_beta(pose, spec), spec)
    view = project_points(K, network_view_pose(pose, spec, region), box.corners)
    noise = rng.standard_normal((8, 2))
    predicted = view + cfg.corner_noise_px * noise
    scale = rng.uniform(*cfg.scale_range)
    shift = rng.uniform(-cfg.max_shift_px, cfg.max_shift_px, size=2)

    mask = render_mask(mesh, pose, K)
    if occluders is None:
        occ = occluder_masks(mesh, pose, K, mask, cfg, rng, occluder_meshes)
    else:
        occ = np.zeros_like(mask)
        for o in occluders:
            occ |= np.asarray(o, dtype=bool)
    try:
        vis = mask_visible_fraction(mask, occ)
    except EmptyMaskError:
        vis = 0.0
    frame = SynthFrame(frame_id, object_id or mesh.name, pose, gt, predicted, vis, region,
                       float(scale), shift, mask, occ)
    if score_maps:
        work = K.scaled(WORK_WIDTH, WORK_HEIGHT)
        wmask = render_mask(mesh, pose, work) & ~_resample_mask(occ, WORK_WIDTH, WORK_HEIGHT)
        frame.coarse_scores, frame.fine_scores = gen_score_maps(wmask)
    return frame


def _resample_mask(mask, width, height):
    h, w = mask.shape
    if (w, h) == (width, height):
        return mask
    ys = np.minimum((np.arange(height) * h) // height, h - 1)
    xs = np.minimum((np.arange(width) * w) // width, w - 1)
    return mask[np.ix_(ys, xs)]


def gen_score_maps(mask):
    """Ideal segmentation scores: covered fraction of each 16x16 (coarse)
    and 8x8 (fine) cell of a 512x384 mask.

    :return: ``(coarse (24, 32), fine (48, 64))``.
    """
    m = np.asarray(mask, dtype=float)
    if m.shape != (WORK_HEIGHT, WORK_WIDTH):
        raise FormatError(f"score maps need a {WORK_HEIGHT}x{WORK_WIDTH} mask, got {m.shape}")
    coarse = m.reshape(24, 16, 32, 16).mean(axis=(1, 3))
    fine = m.reshape(48, 8, 64, 8).mean(axis=(1, 3))
    return coarse, fine


def gen_background(rng, height, width, octaves=4):
    """Seeded procedural noise (uint8) standing in for random photographs."""
    img = np.zeros((height, width))
    for k in range(octaves):
        cell = max(1, 2 ** (octaves - k + 2))
        gh, gw = height // cell + 2, width // cell + 2
        grid = rng.random((gh, gw))
        ys = np.arange(height) / cell
        xs = np.arange(width) / cell
        y0, x0 = ys.astype(int), xs.astype(int)
        fy, fx = (ys - y0)[:, None], (xs - x0)[None, :]
        g00 = grid[np.ix_(y0, x0)]
        g01 = grid[np.ix_(y0, x0 + 1)]
        g10 = grid[np.ix_(y0 + 1, x0)]
        g11 = grid[np.ix_(y0 + 1, x0 + 1)]
        layer = (g00 * (1 - fx) + g01 * fx) * (1 - fy) + (g10 * (1 - fx) + g11 * fx) * fy
        img += layer / 2 ** k
    img /= img.max() or 1.0
    return (255 * img).astype(np.uint8)


def compose_image(frame: SynthFrame, background, object_value=200, occluder_value=90):
    """Grayscale composite of background, object silhouette and occluders."""
    img = np.array(background, dtype=np.uint8, copy=True)
    if frame.mask is not None:
        img[frame.mask] = object_value
    if frame.occluder_mask is not None:
        img[frame.occluder_mask] = occluder_value
    return img


def generate_frames(meshes, specs, K: CameraIntrinsics, cfg: SynthConfig, n_frames,
                    score_maps=False):
    """``n_frames`` frames cycling through the objects of ``meshes`` (dict)."""
    names = list(meshes)
    others = [meshes[n] for n in names]
    frames = []
    for i in range(n_frames):
        name = names[i % len(names)]
        mesh = meshes[name]
        spec = specs.get(name)
        rng = frame_rng(cfg.seed, i)
        pose = gen_pose(cfg, rng, K, bbox_corners(mesh), spec)
        frames.append(gen_window(mesh, pose, cfg, rng, K, i, name, spec,
                                 occluder_meshes=[m for m in others if m is not mesh] or None,
                                 score_maps=score_maps))
    return frames
