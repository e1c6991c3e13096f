"""Class activation maps, CAM-to-box extraction, IoU and Top-1 metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import pnm

IOU_THRESHOLD = 0.5
DEFAULT_THETA_SEG = 0.20

_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


@dataclass(frozen=True)
class Box:
    """Half-open pixel rectangle: columns ``[x0, x1)``, rows ``[y0, y1)``."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if min(self.x0, self.y0) < 0:
            raise ValueError(f"negative box coordinate: {self}")
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"degenerate box: {self}")

    @property
    def area(self) -> int:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def as_list(self) -> list[int]:
        return [self.x0, self.y0, self.x1, self.y1]


@dataclass(frozen=True)
class LocOutcome:
    """Per-sample localization result.

    ``iou`` uses the CAM of the predicted class; ``gt_iou`` the CAM of the
    true class (identical when the prediction is right).
    """

    sample_id: int
    pred_class: int
    true_class: int
    pred_box: Box | None
    gt_box: Box
    iou: float
    gt_iou: float | None = None

    @property
    def clas_correct(self) -> bool:
        return self.pred_class == self.true_class

    @property
    def loc_correct(self) -> bool:
        return self.clas_correct and self.iou >= IOU_THRESHOLD

    @property
    def gt_known_iou(self) -> float:
        if self.clas_correct or self.gt_iou is None:
            return self.iou
        return self.gt_iou

    def to_dict(self) -> dict:
        return {
            "id": self.sample_id,
            "pred": self.pred_class,
            "label": self.true_class,
            "pred_box": self.pred_box.as_list() if self.pred_box else None,
            "gt_box": self.gt_box.as_list(),
            "iou": round(self.iou, 6),
            "gt_iou": round(self.gt_known_iou, 6),
            "clas_correct": self.clas_correct,
            "loc_correct": self.loc_correct,
        }


@dataclass(frozen=True)
class MetricsReport:
    top1_clas: float
    top1_loc: float
    gt_known_loc: float
    count: int


def compute_cam(features: np.ndarray, class_weights: np.ndarray) -> np.ndarray:
    """Weighted sum of feature channels, ``(c, h, w), (c,) -> (h, w)``."""
    features = np.asarray(features, dtype=np.float64)
    class_weights = np.asarray(class_weights, dtype=np.float64)
    if class_weights.shape != (features.shape[-3],):
        raise ValueError(
            f"{class_weights.shape[0] if class_weights.ndim else 0} class weights for {features.shape[-3]} channels")
    return np.tensordot(class_weights, features, axes=(0, -3))


def upsample_bilinear(m: np.ndarray, H: int, W: int) -> np.ndarray:
    """Corner-aligned bilinear resize of an ``(h, w)`` map to ``(H, W)``."""
    m = np.asarray(m, dtype=np.float64)
    h, w = m.shape
    if H < h or W < w:
        raise ValueError(f"cannot upsample {h}x{w} to smaller {H}x{W}")

    def coords(n_out, n_in):
        if n_out == 1 or n_in == 1:
            src = np.zeros(n_out)
        else:
            src = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
        lo = np.minimum(np.floor(src).astype(int), n_in - 1)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    r0, r1, fr = coords(H, h)
    c0, c1, fc = coords(W, w)
    top = m[r0][:, c0] * (1 - fc) + m[r0][:, c1] * fc
    bottom = m[r1][:, c0] * (1 - fc) + m[r1][:, c1] * fc
    return top * (1 - fr)[:, None] + bottom * fr[:, None]


def normalize_minmax(cam: np.ndarray) -> np.ndarray:
    lo, hi = cam.min(), cam.max()
    if hi == lo:
        return np.zeros_like(cam, dtype=np.float64)
    return (cam - lo) / (hi - lo)


def segment_heatmap(cam: np.ndarray, theta_seg: float = DEFAULT_THETA_SEG) -> np.ndarray:
    """Binary foreground: cells whose min-max normalized value reaches ``theta_seg``.

    A constant CAM has no foreground.
    """
    if not 0.0 < theta_seg < 1.0:
        raise ValueError(f"theta_seg must lie in (0, 1), got {theta_seg}")
    cam = np.asarray(cam, dtype=np.float64)
    if cam.max() == cam.min():
        return np.zeros_like(cam)
    return (normalize_minmax(cam) >= theta_seg).astype(np.float64)


def largest_component_bbox(mask: np.ndarray) -> Box | None:
    """Tight box of the largest 8-connected component of a binary mask.

    Size ties go to the box with the smaller top row, then left column.
    """
    mask = np.asarray(mask)
    if not np.all((mask == 0) | (mask == 1)):
        raise ValueError("mask must be binary")
    labels, n = ndimage.label(mask, structure=_EIGHT_CONNECTED)
    if n == 0:
        return None
    sizes = np.bincount(labels.ravel())[1:]
    slices = ndimage.find_objects(labels)
    best = max(range(n), key=lambda k: (sizes[k], -slices[k][0].start, -slices[k][1].start))
    rows, cols = slices[best]
    return Box(cols.start, rows.start, cols.stop, rows.stop)


def iou(a: Box, b: Box) -> float:
    iw = min(a.x1, b.x1) - max(a.x0, b.x0)
    ih = min(a.y1, b.y1) - max(a.y0, b.y0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def cam_box(features: np.ndarray, class_weights: np.ndarray, image_hw: tuple[int, int],
            theta_seg: float = DEFAULT_THETA_SEG):
    """Full CAM pipeline for one sample. Returns ``(upsampled_cam, box_or_None)``."""
    cam = upsample_bilinear(compute_cam(features, class_weights), *image_hw)
    return cam, largest_component_bbox(segment_heatmap(cam, theta_seg))


def localize(sample_id: int, features: np.ndarray, logits: np.ndarray, classifier: np.ndarray,
             label: int, gt_box: Box, image_hw: tuple[int, int],
             theta_seg: float = DEFAULT_THETA_SEG) -> LocOutcome:
    pred = int(np.argmax(logits))
    _, box = cam_box(features, classifier[pred], image_hw, theta_seg)
    score = iou(box, gt_box) if box is not None else 0.0
    gt_score = score
    if pred != label:
        _, gt_pred_box = cam_box(features, classifier[label], image_hw, theta_seg)
        gt_score = iou(gt_pred_box, gt_box) if gt_pred_box is not None else 0.0
    return LocOutcome(sample_id, pred, int(label), box, gt_box, score, gt_score)


def evaluate(outcomes) -> MetricsReport:
    outcomes = list(outcomes)
    if not outcomes:
        raise ValueError("cannot evaluate an empty outcome list")
    n = len(outcomes)
    clas = sum(o.clas_correct for o in outcomes)
    loc = sum(o.loc_correct for o in outcomes)
    known = sum(o.gt_known_iou >= IOU_THRESHOLD for o in outcomes)
    return MetricsReport(clas / n, loc / n, known / n, n)


def cam_to_gray(cam: np.ndarray) -> np.ndarray:
    """Min-max scale a CAM to 8-bit gray."""
    return np.round(normalize_minmax(np.asarray(cam, dtype=np.float64)) * 255).astype(np.uint8)


def write_heatmap(path, cam: np.ndarray) -> None:
    pnm.write_pgm(path, cam_to_gray(cam))


def overlay_image(image: np.ndarray, cam: np.ndarray) -> np.ndarray:
    """50% blend of the heatmap (red channel) over a ``(3, H, W)`` image in [0, 1]."""
    heat = np.zeros_like(image)
    heat[0] = normalize_minmax(cam)
    return 0.5 * image + 0.5 * heat


def draw_boxes(image: np.ndarray, gt: Box | None, pred: Box | None) -> np.ndarray:
    """1-px outlines: ground truth in the green channel, prediction in red."""
    out = np.array(image, dtype=np.float64, copy=True)
    for box, ch in ((gt, 1), (pred, 0)):
        if box is None:
            continue
        y1, x1 = box.y1 - 1, box.x1 - 1
        out[ch, box.y0, box.x0:box.x1] = 1.0
        out[ch, y1, box.x0:box.x1] = 1.0
        out[ch, box.y0:box.y1, box.x0] = 1.0
        out[ch, box.y0:box.y1, x1] = 1.0
    return out
