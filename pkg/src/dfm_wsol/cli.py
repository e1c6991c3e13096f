"""Command-line entry point: ``dfm-wsol {gen-data,train,eval,ablate,heatmap}``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import cam_loc, experiment, pnm
from .checkpoint import CheckpointError, load_checkpoint
from .config import ConfigError, RunConfig, format_kv_text, load_config_file
from .synth_data import DatasetError, generate_dataset, load_dataset
from .toy_net import predict
from .training import as_float_images

log = logging.getLogger("dfm_wsol")

# flag dest -> config key, for flags that map onto RunConfig keys
_CONFIG_FLAGS = {
    "seed": int, "out": str, "data": str, "checkpoint": str,
    "alpha": float, "beta": float, "omega": float, "delta": float, "gamma": float, "tau": float,
    "apply_mode": str, "active_in_eval": str, "branches": str, "fusion": str, "focus": str,
    "lr": float, "momentum": float, "epochs": int, "batch_size": int, "dfm_slots": str,
    "num_classes": int, "train_per_class": int, "test_per_class": int, "image_size": int,
    "clutter_max": int, "body_texture": float, "theta_seg": float,
}


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("run configuration (flag > --config file > default)")
    g.add_argument("--config", metavar="PATH", help="flat 'key = value' config file")
    for dest, typ in _CONFIG_FLAGS.items():
        flag = "--" + dest.replace("_", "-")
        g.add_argument(flag, dest=dest, type=typ, default=None)
    g.add_argument("--no-dfm", action="store_true", help="train the plain CAM baseline (no DFM slots)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="dfm-wsol", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-data", parents=[common], help="render the synthetic benchmark")
    sub.add_parser("train", parents=[common], help="train a network and write a checkpoint")

    p = sub.add_parser("eval", parents=[common], help="CAM localization metrics for a checkpoint")
    p.add_argument("--run", help="run name for the CSV (default: checkpoint directory name)")
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--per-sample", action="store_true", help="also write samples.jsonl")

    p = sub.add_parser("ablate", parents=[common], help="train+eval every ablation variant per seed")
    p.add_argument("--variants", default=",".join(experiment.ABLATION_VARIANTS))
    p.add_argument("--seeds", default="1,2,3")

    p = sub.add_parser("heatmap", parents=[common], help="export CAM heatmaps and box overlays")
    p.add_argument("--ids", required=True, help="comma-separated sample ids")
    return parser


def _run_config(args) -> RunConfig:
    file_values = load_config_file(args.config) if args.config else {}
    flags = {k: getattr(args, k) for k in _CONFIG_FLAGS if getattr(args, k, None) is not None}
    if args.no_dfm:
        flags["dfm_slots"] = ""
    return RunConfig.build(file_values, flags)


def _require(parser, rc: RunConfig, *keys):
    for key in keys:
        if not rc[key]:
            parser.error(f"--{key.replace('_', '-')} is required")


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from exc


def cmd_gen_data(args, rc: RunConfig) -> int:
    spec = rc.dataset_spec()
    rows = generate_dataset(spec, rc["out"])
    n_train = sum(r["split"] == "train" for r in rows)
    print(f"gen-data: wrote {len(rows)} images ({n_train} train, {len(rows) - n_train} test, "
          f"{spec.num_classes} classes, seed {spec.seed}) to {rc['out']}")
    return 0


def cmd_train(args, rc: RunConfig) -> int:
    cfg = rc.train
    out = Path(rc["out"] or "run")
    ckpt = experiment.train_run(rc["data"], cfg, out)
    pnm.atomic_write_text(out / "run.cfg", format_kv_text({k: rc[k] for k in rc.values}))
    last = ckpt.history[-1]
    kind = "baseline" if not cfg.dfm_slots else f"dfm slots {','.join(cfg.dfm_slots)}"
    print(f"train: {kind}, seed {cfg.seed}, {last.epoch} epochs, final loss {last.loss:.4f}, "
          f"train acc {last.accuracy:.4f} -> {out / experiment.CHECKPOINT_NAME}")
    return 0


def _checkpoint_path(rc: RunConfig) -> Path:
    if rc["checkpoint"]:
        return Path(rc["checkpoint"])
    raise ConfigError("--checkpoint is required")


def cmd_eval(args, rc: RunConfig) -> int:
    ckpt_path = _checkpoint_path(rc)
    ckpt = load_checkpoint(ckpt_path)
    outcomes, report = experiment.evaluate_checkpoint(ckpt, rc["data"], args.split, rc["theta_seg"])
    run = args.run or ckpt_path.resolve().parent.name
    out = Path(rc["out"] or ckpt_path.parent)
    row = experiment.metrics_row(run, ckpt.train_config.seed, args.split, report)
    pnm.atomic_write_text(out / "metrics.csv", experiment.csv_text(experiment.METRICS_HEADER, [row]))
    if args.per_sample:
        pnm.atomic_write_text(out / "samples.jsonl", experiment.outcomes_jsonl(outcomes))
    print(f"eval: {run} {args.split} n={report.count} top1_clas={report.top1_clas:.4f} "
          f"top1_loc={report.top1_loc:.4f} gt_known_loc={report.gt_known_loc:.4f}")
    return 0


def cmd_ablate(args, rc: RunConfig) -> int:
    plan = experiment.AblationPlan(tuple(v.strip() for v in args.variants.split(",") if v.strip()),
                                   tuple(_int_list(args.seeds)))
    out = Path(rc["out"] or "ablation")
    rows, summary = experiment.run_ablation(rc["data"], plan, rc.train, out, rc["theta_seg"])
    pnm.atomic_write_text(out / "ablation.csv", experiment.csv_text(experiment.METRICS_HEADER, rows))
    pnm.atomic_write_text(out / "ablation_summary.csv", experiment.csv_text(experiment.SUMMARY_HEADER, summary))
    for s in summary:
        print("ablate: " + " ".join(str(v) for v in s))
    return 0


def cmd_heatmap(args, rc: RunConfig) -> int:
    ckpt = load_checkpoint(_checkpoint_path(rc))
    wanted = _int_list(args.ids)
    samples = {s.id: s for s in load_dataset(rc["data"]) if s.id in set(wanted)}
    missing = [i for i in wanted if i not in samples]
    if missing:
        raise DatasetError(f"unknown sample ids: {', '.join(map(str, missing))}")
    out = Path(rc["out"] or "heatmaps")
    net = ckpt.net
    for sid in wanted:
        s = samples[sid]
        logits, feats = predict(net, as_float_images(s.pixels[None]))
        pred = int(np.argmax(logits[0]))
        cam, box = cam_loc.cam_box(feats[0], net.classifier[pred], s.pixels.shape[1:], rc["theta_seg"])
        if cam.max() == cam.min():
            log.warning("sample %d: constant CAM, segmentation mask is all zeros", sid)
        image = s.image
        cam_loc.write_heatmap(out / f"cam_{sid:06d}.pgm", cam)
        pnm.write_ppm(out / f"overlay_{sid:06d}.ppm", cam_loc.overlay_image(image, cam))
        pnm.write_ppm(out / f"boxes_{sid:06d}.ppm", cam_loc.draw_boxes(image, s.box, box))
        score = cam_loc.iou(box, s.box) if box else 0.0
        note = ""
        if box is None:
            note = " (constant CAM: all-zero mask)" if cam.max() == cam.min() else " (empty mask)"
        print(f"heatmap: id {sid} label {s.label} pred {pred} iou {score:.4f}{note}")
    return 0


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval,
            "ablate": cmd_ablate, "heatmap": cmd_heatmap}


def configure_logging() -> None:
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("DFM_LOG", "error").lower(), logging.ERROR)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        rc = _run_config(args)
        if args.command == "gen-data":
            _require(parser, rc, "out")
        elif args.command in ("train", "eval", "ablate", "heatmap"):
            _require(parser, rc, "data")
        return COMMANDS[args.command](args, rc)
    except (ConfigError, DatasetError, CheckpointError, OSError, ValueError) as exc:
        print(f"dfm-wsol {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
