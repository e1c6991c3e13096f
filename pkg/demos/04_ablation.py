"""Component ablation: channel only, position only, dual, cross fusion, full module.

A small dataset and two epochs keep this quick; the numbers are only
meant to show the harness, not to rank the variants.  The CLI form is

    dfm-wsol ablate --data data --out ablation --seeds 1,2,3

Run with ``python3 demos/04_ablation.py [workdir]``.
"""

# %%
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

from dfm_wsol import experiment
from dfm_wsol.synth_data import DatasetSpec, generate_dataset
from dfm_wsol.toy_net import TrainConfig

work = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="dfm-ablate-"))
generate_dataset(DatasetSpec(train_per_class=40, test_per_class=10, image_size=32), work / "data")

# %% [markdown]
# Each variant switches module components on top of the default config.

# %%
for name, toggles in experiment.ABLATION_VARIANTS.items():
    print(f"{name:9s}", toggles)

# %%
plan = experiment.AblationPlan(seeds=(1, 2))
base = replace(TrainConfig(), epochs=2, batch_size=16)
rows, summary = experiment.run_ablation(work / "data", plan, base, work / "runs")
print(experiment.csv_text(experiment.SUMMARY_HEADER, summary))
