"""
Pose from eight projected corners
=================================

A pose is recovered from the image projections of the 8 corners of the
object's 3D bounding box: a linear DLT estimate followed by
Levenberg-Marquardt on the reprojection error.
"""

# %%
# A camera, a box and a random pose.
import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from cornerpose.geometry import BoxCorners3D, CameraIntrinsics, Pose, project_points, rotation_angle
from cornerpose.pnp import Correspondences, reprojection_rms, solve_pnp, solve_pnp_dlt

K = CameraIntrinsics(500.0, 500.0, 320.0, 240.0, 640, 480)
box = BoxCorners3D.from_bounds([-0.05, -0.07, -0.04], [0.05, 0.07, 0.04])
gt = Pose([0.4, -0.9, 0.3], [0.05, -0.02, 0.8])
corners = project_points(K, gt, box.corners)
print(np.round(corners, 2))

# %%
# Noiseless corners give the pose back to machine precision.
est = solve_pnp(Correspondences(box.corners, corners, K))
print("rotation error [deg]", np.degrees(rotation_angle(est.R @ gt.R.T)))
print("translation error [m]", np.linalg.norm(est.t - gt.t))

# %%
# With pixel noise the linear estimate is a starting point and the
# nonlinear step lowers the reprojection error.
rng = np.random.default_rng(0)
sigmas = [0.5, 1, 2, 4, 8]
dlt_rms, lm_rms = [], []
for s in sigmas:
    a, b = [], []
    for _ in range(200):
        c = Correspondences(box.corners, corners + s * rng.standard_normal((8, 2)), K)
        a.append(reprojection_rms(solve_pnp_dlt(c), c))
        b.append(reprojection_rms(solve_pnp(c), c))
    dlt_rms.append(np.mean(a))
    lm_rms.append(np.mean(b))

fig, ax = plt.subplots(figsize=(4.5, 3))
ax.plot(sigmas, dlt_rms, "o-", label="DLT")
ax.plot(sigmas, lm_rms, "s-", label="DLT + LM")
ax.plot(sigmas, np.sqrt(10 / 8) * np.array(sigmas), "k:", label="noise floor")
ax.set_xlabel("corner noise sigma [px]")
ax.set_ylabel("reprojection RMS [px]")
ax.legend()
fig.tight_layout()
fig.savefig("pnp_noise.png", dpi=100)
