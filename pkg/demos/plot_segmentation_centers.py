"""
Object centers from coarse and fine segmentation scores
=======================================================

Score maps on a 32x24 coarse grid are thresholded, the largest connected
component is kept, and a 64x48 fine map refines its shape. The centroid
of the fine mask is the object's 2D center.
"""

# %%
import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from cornerpose.geometry import Pose, project
from cornerpose.harness import DEFAULT_INTRINSICS
from cornerpose.renderer import render_mask
from cornerpose.segmentation import detect
from cornerpose.synth import gen_score_maps, prism_mesh

work = DEFAULT_INTRINSICS.scaled(512, 384)
mesh = prism_mesh(6, radius=0.06, height=0.12)
pose = Pose([0.3, 0.5, 0.1], [0.05, 0.02, 0.6])

# %%
# Ideal scores: the covered fraction of each cell.
coarse, fine = gen_score_maps(render_mask(mesh, pose, work))
rng = np.random.default_rng(1)
coarse = np.clip(coarse + 0.15 * rng.standard_normal(coarse.shape), 0, 1)
res = detect(coarse, fine, tau1=0.5, tau2=0.3)
print("present:", res.present, "center:", res.center)
print("projected origin:", project(work, pose, [0, 0, 0]))

# %%
fig, axes = plt.subplots(1, 3, figsize=(10, 2.8))
axes[0].imshow(coarse, cmap="gray")
axes[0].set_title("coarse scores")
axes[1].imshow(res.coarse_mask, cmap="gray")
axes[1].set_title("largest component")
axes[2].imshow(res.mask, cmap="gray")
axes[2].plot(res.center[0] / 8 - 0.5, res.center[1] / 8 - 0.5, "r+", ms=12)
axes[2].set_title("fine mask and center")
fig.tight_layout()
fig.savefig("segmentation.png", dpi=100)
