"""Synthetic localization benchmark: a large class-agnostic body carrying a
small class-specific marker near its edge.

Plain CAM tends to light up only the marker, so its box under-covers the
body; this is the failure mode the attention-erasing module addresses.
Every sample is a pure function of ``(spec.seed, sample id)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import pnm
from .cam_loc import Box
from .tensor_core import RngStream

MARKERS = ("dot", "ring", "cross", "checker")
BODY_SHAPES = ("rectangle", "ellipse")
MAX_ATTEMPTS = 100


@dataclass(frozen=True)
class DatasetSpec:
    num_classes: int = 4
    train_per_class: int = 500
    test_per_class: int = 200
    image_size: int = 64
    body_shapes: tuple[str, ...] = BODY_SHAPES
    markers: tuple[str, ...] = MARKERS
    body_area: tuple[float, float] = (0.12, 0.35)
    clutter_max: int = 3
    clutter_intensity: tuple[float, float] = (0.25, 0.55)
    body_texture: float = 0.04
    seed: int = 1

    def __post_init__(self):
        if self.num_classes != len(self.markers):
            raise ValueError(f"{self.num_classes} classes need {self.num_classes} marker patterns, got {len(self.markers)}")
        unknown = set(self.markers) - set(MARKERS)
        if unknown:
            raise ValueError(f"unknown marker patterns {sorted(unknown)}")
        if set(self.body_shapes) - set(BODY_SHAPES) or not self.body_shapes:
            raise ValueError(f"body shapes must be drawn from {BODY_SHAPES}")
        lo, hi = self.body_area
        if not 0.10 <= lo <= hi <= 0.40:
            raise ValueError("body area fraction must lie within [0.10, 0.40]")
        if self.train_per_class < 0 or self.test_per_class < 0:
            raise ValueError("sample counts must be non-negative")
        if self.image_size < 32 or self.image_size % 4:
            raise ValueError("image size must be a multiple of 4, at least 32")
        if self.clutter_max < 0:
            raise ValueError("clutter_max must be non-negative")
        if not 0.0 <= self.body_texture <= 0.5:
            raise ValueError("body_texture must lie in [0, 0.5]")

    @property
    def num_train(self) -> int:
        return self.num_classes * self.train_per_class

    @property
    def num_samples(self) -> int:
        return self.num_classes * (self.train_per_class + self.test_per_class)

    def split_of(self, sample_id: int) -> str:
        return "train" if sample_id < self.num_train else "test"

    def label_of(self, sample_id: int) -> int:
        return sample_id % self.num_classes


@dataclass
class Sample:
    id: int
    pixels: np.ndarray  # uint8 (3, H, W)
    label: int
    box: Box
    split: str = "train"
    marker_box: Box | None = field(default=None, compare=False)

    @property
    def image(self) -> np.ndarray:
        return self.pixels.astype(np.float64) / 255.0


class DatasetError(ValueError):
    pass


def marker_pattern(name: str, size: int) -> np.ndarray:
    """Boolean ``size x size`` stamp for one marker class."""
    c = (size - 1) / 2
    i, j = np.mgrid[:size, :size]
    r2 = (i - c) ** 2 + (j - c) ** 2
    if name == "dot":
        return r2 <= (size / 2) ** 2
    if name == "ring":
        return (r2 <= (size / 2) ** 2) & (r2 > (size / 2 - 2) ** 2)
    if name == "cross":
        return (np.abs(i - c) <= 1) | (np.abs(j - c) <= 1)
    if name == "checker":
        return ((i // 2 + j // 2) % 2) == 0
    raise ValueError(f"unknown marker {name!r}")


def body_stripes(k: int, size: int, phase: int = 0) -> np.ndarray:
    """Faint +-1 stripe texture of period 4 whose orientation depends on the class."""
    i, j = np.mgrid[:size, :size]
    coord = (i, j, i + j, i - j)[k % 4] + phase
    return np.where(coord % 4 < 2, 1.0, -1.0)


def _shape_mask(shape: str, cy: float, cx: float, hh: float, hw: float, size: int) -> np.ndarray:
    i, j = np.mgrid[:size, :size] + 0.5
    if shape == "rectangle":
        return (np.abs(i - cy) <= hh) & (np.abs(j - cx) <= hw)
    return ((i - cy) / hh) ** 2 + ((j - cx) / hw) ** 2 <= 1.0


def _mask_box(mask: np.ndarray) -> Box:
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return Box(int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1)


def _draw_body(rng: RngStream, spec: DatasetSpec, area_range, size: int):
    """Random body shape; returns ``(shape, (cy, cx, hh, hw))`` or ``None`` if it cannot fit."""
    shape = spec.body_shapes[int(rng.integers(len(spec.body_shapes)))]
    area = rng.uniform(*area_range) * size * size
    aspect = rng.uniform(0.6, 1.6)
    if shape == "rectangle":
        hw = np.sqrt(area * aspect) / 2
        hh = area / (4 * hw)
    else:
        hw = np.sqrt(area * aspect / np.pi)
        hh = area / (np.pi * hw)
    if 2 * hh + 2 > size or 2 * hw + 2 > size:
        return None
    cy = rng.uniform(hh + 1, size - hh - 1)
    cx = rng.uniform(hw + 1, size - hw - 1)
    return shape, (cy, cx, hh, hw)


def _render_once(k: int, rng: RngStream, spec: DatasetSpec):
    size = spec.image_size
    drawn = _draw_body(rng, spec, spec.body_area, size)
    if drawn is None:
        return None
    shape, (cy, cx, hh, hw) = drawn
    body = _shape_mask(shape, cy, cx, hh, hw, size)
    body_area = int(body.sum())
    if not (0.10 * size * size <= body_area <= 0.40 * size * size):
        return None

    msize = 11 if 121 <= 0.15 * body_area else 9 if 81 <= 0.15 * body_area else 7
    if msize * msize > 0.15 * body_area:
        return None
    # Marker centre sits on the inner rim of the body, in a random direction.
    theta = rng.uniform(0, 2 * np.pi)
    inset = msize / 2 + 1
    ry, rx = hh - inset, hw - inset
    if ry <= 0 or rx <= 0:
        return None
    if shape == "rectangle":
        t = max(abs(np.cos(theta)) / rx, abs(np.sin(theta)) / ry)
        my, mx = cy + np.sin(theta) / t, cx + np.cos(theta) / t
    else:
        my, mx = cy + ry * np.sin(theta), cx + rx * np.cos(theta)
    top, left = int(round(my - msize / 2)), int(round(mx - msize / 2))
    if top < 0 or left < 0 or top + msize > size or left + msize > size:
        return None
    stamp = marker_pattern(spec.markers[k], msize)
    marker = np.zeros((size, size), dtype=bool)
    marker[top:top + msize, left:left + msize] = stamp

    # Background, then distractor bodies away from the object, then the object.
    bg = rng.uniform(0.05, 0.25, size=3)
    img = bg[:, None, None] + rng.normal(0.0, 0.04, size=(3, size, size))
    obj_box = _mask_box(body | marker)
    keep_out = np.zeros((size, size), dtype=bool)
    keep_out[max(obj_box.y0 - 2, 0):obj_box.y1 + 2, max(obj_box.x0 - 2, 0):obj_box.x1 + 2] = True
    for _ in range(int(rng.integers(0, spec.clutter_max + 1))):
        for _try in range(20):
            d = _draw_body(rng, spec, (0.10, 0.10), size)
            if d is None:
                continue
            dshape, (dy, dx, dh, dw) = d
            scale = rng.uniform(0.45, 0.7)
            dmask = _shape_mask(dshape, dy, dx, dh * scale, dw * scale, size)
            if dmask.any() and not (dmask & keep_out).any():
                colour = rng.uniform(*spec.clutter_intensity, size=3)
                img[:, dmask] = colour[:, None] + rng.normal(0.0, 0.03, size=(3, int(dmask.sum())))
                keep_out |= dmask
                break

    body_colour = rng.uniform(0.3, 0.9, size=3)
    stripes = spec.body_texture * body_stripes(k, size, int(rng.integers(4)))
    img[:, body] = body_colour[:, None] + stripes[body] + rng.normal(0.0, 0.03, size=(3, body_area))
    marker_colour = np.where(body_colour > 0.6, rng.uniform(0.0, 0.15, size=3), rng.uniform(0.85, 1.0, size=3))
    img[:, marker] = marker_colour[:, None]
    pixels = np.round(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)
    return pixels, obj_box, _mask_box(marker)


def render_sample(k: int, rng: RngStream, spec: DatasetSpec = DatasetSpec(), sample_id: int = 0) -> Sample:
    """Draw one sample of class ``k`` from ``rng``."""
    if not 0 <= k < spec.num_classes:
        raise ValueError(f"class {k} outside [0, {spec.num_classes})")
    for _ in range(MAX_ATTEMPTS):
        out = _render_once(k, rng, spec)
        if out is not None:
            pixels, box, marker_box = out
            return Sample(sample_id, pixels, k, box, spec.split_of(sample_id), marker_box)
    raise DatasetError(f"sample {sample_id}: could not place an object in {MAX_ATTEMPTS} attempts")


def sample_for_id(spec: DatasetSpec, sample_id: int) -> Sample:
    rng = RngStream(spec.seed, "data-gen", sample_id)
    return render_sample(spec.label_of(sample_id), rng, spec, sample_id)


def generate_samples(spec: DatasetSpec):
    for sample_id in range(spec.num_samples):
        yield sample_for_id(spec, sample_id)


def index_row(sample: Sample) -> dict:
    return {"id": sample.id, "file": f"img/{sample.id:06d}.ppm", "split": sample.split,
            "label": sample.label, "box": sample.box.as_list()}


def generate_dataset(spec: DatasetSpec, out_dir) -> list[dict]:
    """Render every sample to ``out_dir/img/*.ppm`` and write ``index.jsonl``.

    Returns the index rows.
    """
    out_dir = Path(out_dir)
    (out_dir / "img").mkdir(parents=True, exist_ok=True)
    rows = []
    for sample in generate_samples(spec):
        row = index_row(sample)
        pnm.write_ppm(out_dir / row["file"], sample.pixels)
        rows.append(row)
    pnm.atomic_write_text(out_dir / "index.jsonl", "".join(json.dumps(r) + "\n" for r in rows))
    return rows


def read_index(data_dir) -> list[dict]:
    path = Path(data_dir) / "index.jsonl"
    if not path.exists():
        raise DatasetError(f"{path}: index not found")
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            sid = row["id"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DatasetError(f"{path}:{lineno}: malformed index line") from exc
        try:
            if not isinstance(sid, int) or row["split"] not in ("train", "test"):
                raise ValueError("bad id or split")
            if not isinstance(row["label"], int) or row["label"] < 0:
                raise ValueError("bad label")
            if not isinstance(row["file"], str) or len(row["box"]) != 4:
                raise ValueError("bad file or box")
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"sample {sid}: malformed index line {lineno} ({exc})") from exc
        rows.append(row)
    return rows


def load_dataset(data_dir, split: str | None = None):
    """Yield :class:`Sample` objects in index order, validating each one."""
    data_dir = Path(data_dir)
    for row in read_index(data_dir):
        if split is not None and row["split"] != split:
            continue
        sid = row["id"]
        path = data_dir / row["file"]
        if not path.exists():
            raise DatasetError(f"sample {sid}: missing image file {path}")
        try:
            pixels = pnm.read_pnm(path)
        except (ValueError, IndexError) as exc:
            raise DatasetError(f"sample {sid}: corrupt image file {path} ({exc})") from exc
        if pixels.ndim != 3 or pixels.shape[1] != pixels.shape[2]:
            raise DatasetError(f"sample {sid}: expected a square RGB image, got {pixels.shape}")
        size = pixels.shape[1]
        try:
            box = Box(*(int(v) for v in row["box"]))
        except ValueError as exc:
            raise DatasetError(f"sample {sid}: invalid box {row['box']}") from exc
        if box.x1 > size or box.y1 > size:
            raise DatasetError(f"sample {sid}: box {row['box']} outside the {size}x{size} image")
        yield Sample(sid, pixels, row["label"], box, row["split"])


def load_arrays(data_dir, split: str | None = None):
    """Stack a split into ``(ids, pixels uint8 (n,3,H,W), labels, boxes)``."""
    samples = list(load_dataset(data_dir, split))
    if not samples:
        raise DatasetError(f"{data_dir}: no samples for split {split!r}")
    ids = np.array([s.id for s in samples])
    pixels = np.stack([s.pixels for s in samples])
    labels = np.array([s.label for s in samples], dtype=np.int64)
    boxes = [s.box for s in samples]
    return ids, pixels, labels, boxes
