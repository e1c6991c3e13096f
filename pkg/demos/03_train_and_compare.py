"""Train a plain CAM network and a DFM network, then compare localization.

This uses a reduced dataset so it finishes in a few minutes on one core.
The full-size comparison is what ``dfm-wsol`` runs by default:

    dfm-wsol gen-data --out data
    dfm-wsol train --data data --no-dfm --out baseline
    dfm-wsol train --data data --out dfm
    dfm-wsol eval --data data --checkpoint dfm/model.dfmckpt

Run with ``python3 demos/03_train_and_compare.py [workdir]``.
"""

# %%
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

from dfm_wsol import experiment
from dfm_wsol.cam_loc import cam_box, write_heatmap
from dfm_wsol.checkpoint import load_checkpoint
from dfm_wsol.pnm import write_ppm
from dfm_wsol.synth_data import DatasetSpec, generate_dataset, load_arrays
from dfm_wsol.toy_net import TrainConfig, predict
from dfm_wsol.training import as_float_images

work = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="dfm-demo-"))
print("working in", work)

# %%
spec = DatasetSpec(train_per_class=150, test_per_class=50)
generate_dataset(spec, work / "data")

# %% [markdown]
# Same seed, same schedule; the only difference is whether the module sits
# in the two slots during training.

# %%
reports = {}
for name, slots in (("baseline", ()), ("dfm", ("A", "B"))):
    cfg = replace(TrainConfig(), dfm_slots=slots, epochs=8)
    ckpt = experiment.train_run(work / "data", cfg, work / name)
    _, reports[name] = experiment.evaluate_checkpoint(ckpt, work / "data")
    print(name, reports[name])

# %% [markdown]
# Export the CAM of the predicted class for a few test images.  Heatmaps
# are PGM, the source images PPM; any image viewer opens them.

# %%
ids, pixels, labels, boxes = load_arrays(work / "data", "test")
for name in reports:
    net = load_checkpoint(work / name / experiment.CHECKPOINT_NAME).net
    logits, feats = predict(net, as_float_images(pixels[:4]))
    for i in range(4):
        cam, box = cam_box(feats[i], net.classifier[logits[i].argmax()], (64, 64))
        write_heatmap(work / name / f"cam_{ids[i]:06d}.pgm", cam)
        write_ppm(work / name / f"image_{ids[i]:06d}.ppm", pixels[i])
        print(name, "id", ids[i], "gt", boxes[i], "pred", box)
