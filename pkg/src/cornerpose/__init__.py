"""Corner-projection 6D pose toolkit: geometry, PnP, symmetry folding,
segmentation post-processing, silhouette rendering, refinement, metrics
and an evaluation harness."""

from .errors import CornerPoseError
from .geometry import (
    BoxCorners3D,
    CameraIntrinsics,
    MeshModel,
    Pose,
    bbox_corners,
    diameter,
    project,
    project_points,
    reflect_pose_x,
    rot_from_expmap,
    rot_log,
)
from .harness import EvalOptions, EvalReport, FrameRecord, Scene, evaluate, threshold_sweep
from .metrics import (
    distance_add,
    distance_adi,
    metric_2d_projection,
    metric_5cm5deg,
    metric_add,
    metric_adi,
)
from .pnp import Correspondences, refine_pnp, solve_pnp, solve_pnp_dlt
from .refinement import refine_pose
from .renderer import mask_visible_fraction, render_mask
from .symmetry import (
    SymmetrySpec,
    classify_region,
    corner_permutation_under_mirror,
    fold_rotation,
    mirror_points_x,
    unfold_rotation,
)

__version__ = "0.1.0"
