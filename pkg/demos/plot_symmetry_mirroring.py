"""
Folding the symmetry angle with a mirrored image
================================================

For an object symmetric under a rotation by ``alpha`` about a vertical axis,
angles in ``[alpha/2, alpha)`` look, in the left-right mirrored image, like
the angle ``alpha - beta``. A predictor trained on ``[0, alpha/2)`` can
therefore handle every pose: mirror the image, predict, mirror the corners
back, swap the min-x and max-x corners and solve PnP.
"""

# %%
import math

import numpy as np

from cornerpose.geometry import CameraIntrinsics, Pose, bbox_corners, project_points, rot_axis_angle
from cornerpose.metrics import distance_adi
from cornerpose.pnp import Correspondences, solve_pnp
from cornerpose.symmetry import (
    SymmetrySpec,
    classify_region,
    fold_rotation,
    unfold_rotation,
    unmirror_correspondences,
)
from cornerpose.synth import network_view_pose, prism_mesh

K = CameraIntrinsics(500.0, 500.0, 320.0, 240.0, 640, 480)
mesh = prism_mesh(4, radius=0.05, height=0.08)
spec = SymmetrySpec("symmetric", math.pi / 2, (0, 1, 0))

# %%
# Region labels and folded angles for a few rotations about the axis.
for deg in (10, 40, 50, 80, 130, 300):
    beta = math.radians(deg)
    fr = fold_rotation(beta, spec)
    print(f"beta={deg:3d}  region={classify_region(beta, spec)}  "
          f"canonical={math.degrees(fr.beta_canonical):5.1f}  mirror={fr.mirror}  "
          f"unfolded={math.degrees(unfold_rotation(fr, spec)):5.1f}")

# %%
# A pose in the second region. The corners a predictor sees in the mirrored
# image are those of the reflected pose.
gt = Pose.from_matrix(rot_axis_angle([0, 1, 0], math.radians(70)), [0.03, 0.01, 0.7])
region = classify_region(math.radians(70), spec)
seen = project_points(K, network_view_pose(gt, spec, region), bbox_corners(mesh).corners)

# %%
# Mirroring back and re-indexing the corners recovers the true pose.
m, M = unmirror_correspondences(seen, bbox_corners(mesh), K.cx)
est = solve_pnp(Correspondences(M, m, K))
print("ADI error [m]:", distance_adi(est, gt, mesh))
