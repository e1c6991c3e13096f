"""From a CAM to a bounding box, and how a box is scored.

Run with ``python3 demos/02_cam_localization.py``.
"""

# %%
import numpy as np

from dfm_wsol.cam_loc import Box, compute_cam, largest_component_bbox, segment_heatmap, upsample_bilinear, iou
from dfm_wsol.synth_data import DatasetSpec, sample_for_id

# %% [markdown]
# A synthetic sample: a textured body carrying a small class marker.  The
# ground-truth box covers body and marker.

# %%
sample = sample_for_id(DatasetSpec(), 5)
print("label", sample.label, "object box", sample.box, "marker box", sample.marker_box)

# %% [markdown]
# Pretend the network only lit up the marker, the way a plain CAM tends to
# focus on the most discriminative part.  We fake 16x16 features with one
# channel that fires on the marker and one that fires weakly on the body.

# %%
feats = np.zeros((2, 16, 16))
mb, ob = sample.marker_box, sample.box
feats[0, mb.y0 // 4:mb.y1 // 4 + 1, mb.x0 // 4:mb.x1 // 4 + 1] = 1.0
feats[1, ob.y0 // 4:ob.y1 // 4, ob.x0 // 4:ob.x1 // 4] = 1.0

for name, weights in (("marker-only", np.array([1.0, 0.0])), ("whole object", np.array([1.0, 0.6]))):
    cam = upsample_bilinear(compute_cam(feats, weights), 64, 64)
    box = largest_component_bbox(segment_heatmap(cam, 0.2))
    print(f"{name:12s} box {box}  IoU {iou(box, sample.box):.3f}")

# %% [markdown]
# IoU uses half-open pixel boxes.  A prediction counts for Top-1 Loc when
# the class is right and IoU reaches 0.5.

# %%
gt = Box(0, 0, 10, 10)
for pred in (Box(0, 0, 10, 5), Box(0, 0, 10, 4)):
    print(pred, "IoU", iou(pred, gt), "counts" if iou(pred, gt) >= 0.5 else "misses")
