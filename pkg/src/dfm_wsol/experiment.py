"""Train / evaluate / ablate pipelines shared by the CLI and the demos."""

from __future__ import annotations

import csv
import io
import json
import logging
import statistics
from dataclasses import dataclass, replace
from pathlib import Path


from . import cam_loc
from .checkpoint import Checkpoint, save_checkpoint
from .dfm import DfmConfig
from .pnm import atomic_write_text
from .synth_data import load_arrays
from .toy_net import TrainConfig, init_network, predict
from .training import TrainState, as_float_images, train

log = logging.getLogger(__name__)

CHECKPOINT_NAME = "model.dfmckpt"
TRAIN_LOG_NAME = "train_log.csv"
METRICS_HEADER = ("run", "seed", "split", "top1_clas", "top1_loc", "gt_known_loc")

# Component toggles of each ablation variant, applied on top of the base config.
ABLATION_VARIANTS = {
    "channel": dict(branches="channel", fusion="none", focus=False),
    "position": dict(branches="position", fusion="none", focus=False),
    "dual": dict(branches="dual", fusion="self", focus=False),
    "fusion": dict(branches="dual", fusion="cross", focus=False),
    "focused": dict(branches="dual", fusion="cross", focus=True),
}


@dataclass(frozen=True)
class AblationPlan:
    variants: tuple[str, ...] = tuple(ABLATION_VARIANTS)
    seeds: tuple[int, ...] = (1, 2, 3)

    def __post_init__(self):
        unknown = [v for v in self.variants if v not in ABLATION_VARIANTS]
        if unknown:
            raise ValueError(f"unknown ablation variants {unknown}; choose from {list(ABLATION_VARIANTS)}")
        if not self.variants or not self.seeds:
            raise ValueError("an ablation plan needs at least one variant and one seed")

    def dfm_config(self, variant: str, base: DfmConfig) -> DfmConfig:
        return replace(base, **ABLATION_VARIANTS[variant])


def fmt(x: float) -> str:
    return f"{x:.6f}"


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def train_log_csv(history) -> str:
    return csv_text(("epoch", "loss", "accuracy"), [(r.epoch, fmt(r.loss), fmt(r.accuracy)) for r in history])


def train_run(data_dir, cfg: TrainConfig, out_dir, checkpoint_every_epoch: bool = True) -> Checkpoint:
    """Train on the train split of ``data_dir``; write checkpoint and epoch log into ``out_dir``."""
    out_dir = Path(out_dir)
    _, pixels, labels, _ = load_arrays(data_dir, "train")
    num_classes = int(labels.max()) + 1
    net = init_network(num_classes, cfg.seed)
    state = TrainState.fresh(net, cfg)

    def on_epoch(st):
        if checkpoint_every_epoch or st.epoch == cfg.epochs:
            save_checkpoint(out_dir / CHECKPOINT_NAME, Checkpoint.from_state(st, cfg))
        atomic_write_text(out_dir / TRAIN_LOG_NAME, train_log_csv(st.history))

    train(net, pixels, labels, cfg, state=state, on_epoch=on_epoch)
    return Checkpoint.from_state(state, cfg)


def evaluate_network(net, pixels, labels, boxes, ids, theta_seg: float = cam_loc.DEFAULT_THETA_SEG,
                     batch_size: int = 64):
    """Eval-mode forward plus CAM localization for every sample."""
    outcomes = []
    hw = pixels.shape[2:]
    for start in range(0, len(labels), batch_size):
        sl = slice(start, start + batch_size)
        logits, feats = predict(net, as_float_images(pixels[sl]), batch_size=batch_size)
        for i, k in enumerate(range(start, min(start + batch_size, len(labels)))):
            outcomes.append(cam_loc.localize(int(ids[k]), feats[i], logits[i], net.classifier,
                                             int(labels[k]), boxes[k], hw, theta_seg))
    return outcomes, cam_loc.evaluate(outcomes)


def evaluate_checkpoint(ckpt: Checkpoint, data_dir, split: str = "test",
                        theta_seg: float = cam_loc.DEFAULT_THETA_SEG):
    ids, pixels, labels, boxes = load_arrays(data_dir, split)
    if labels.max() >= ckpt.net.num_classes:
        raise ValueError(f"dataset has labels beyond the checkpoint's {ckpt.net.num_classes} classes")
    return evaluate_network(ckpt.net, pixels, labels, boxes, ids, theta_seg)


def metrics_row(run: str, seed: int, split: str, report: cam_loc.MetricsReport) -> tuple:
    return (run, seed, split, fmt(report.top1_clas), fmt(report.top1_loc), fmt(report.gt_known_loc))


def outcomes_jsonl(outcomes) -> str:
    return "".join(json.dumps(o.to_dict(), sort_keys=True) + "\n" for o in outcomes)


def median_summary(rows):
    """Median of each metric per run name, in first-appearance order."""
    groups: dict[str, list] = {}
    for row in rows:
        groups.setdefault(row[0], []).append(row)
    summary = []
    for name, group in groups.items():
        med = [statistics.median(float(r[i]) for r in group) for i in (3, 4, 5)]
        summary.append((name, len(group), group[0][2], *(fmt(m) for m in med)))
    return summary


SUMMARY_HEADER = ("run", "n_seeds", "split", "top1_clas", "top1_loc", "gt_known_loc")


def run_ablation(data_dir, plan: AblationPlan, base: TrainConfig, out_dir,
                 theta_seg: float = cam_loc.DEFAULT_THETA_SEG):
    """Train and evaluate every (variant, seed); returns ``(rows, summary)``."""
    out_dir = Path(out_dir)
    rows = []
    for variant in plan.variants:
        dfm_cfg = plan.dfm_config(variant, base.dfm)
        for seed in plan.seeds:
            cfg = replace(base, seed=seed, dfm=dfm_cfg, dfm_slots=base.dfm_slots or ("A", "B"))
            log.info("ablation %s seed %d", variant, seed)
            ckpt = train_run(data_dir, cfg, out_dir / f"{variant}-seed{seed}", checkpoint_every_epoch=False)
            _, report = evaluate_checkpoint(ckpt, data_dir, "test", theta_seg)
            rows.append(metrics_row(variant, seed, "test", report))
    return rows, median_summary(rows)

