"""Binary PGM (P5) / PPM (P6) images through Pillow, plus atomic file writes."""

from __future__ import annotations

import io
import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temp file in the same directory and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def to_uint8(image: np.ndarray) -> np.ndarray:
    if image.dtype == np.uint8:
        return image
    return np.round(np.clip(image, 0.0, 1.0) * 255).astype(np.uint8)


def _encode(px: np.ndarray, mode: str) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(px, mode).save(buf, format="PPM")
    return buf.getvalue()


def encode_ppm(image: np.ndarray) -> bytes:
    """``(3, H, W)`` image (uint8, or float in [0, 1]) to P6 bytes."""
    px = to_uint8(np.asarray(image))
    if px.ndim != 3 or px.shape[0] != 3:
        raise ValueError(f"expected a (3, H, W) image, got {px.shape}")
    return _encode(np.ascontiguousarray(px.transpose(1, 2, 0)), "RGB")


def encode_pgm(gray: np.ndarray) -> bytes:
    px = to_uint8(np.asarray(gray))
    if px.ndim != 2:
        raise ValueError(f"expected an (H, W) map, got {px.shape}")
    return _encode(px, "L")


def write_ppm(path, image: np.ndarray) -> None:
    atomic_write_bytes(path, encode_ppm(image))


def write_pgm(path, gray: np.ndarray) -> None:
    atomic_write_bytes(path, encode_pgm(gray))


def decode_pnm(data: bytes) -> np.ndarray:
    """Parse 8-bit P5/P6 bytes. Returns uint8 ``(H, W)`` or ``(3, H, W)``."""
    try:
        with Image.open(io.BytesIO(data), formats=["PPM"]) as img:
            if img.mode not in ("L", "RGB"):
                raise ValueError(f"unsupported PNM mode {img.mode}")
            px = np.asarray(img, dtype=np.uint8)
    except (OSError, SyntaxError) as exc:
        # Pillow reports short rasters and bad headers as OSError/SyntaxError
        raise ValueError(f"unreadable PNM data: {exc}") from exc
    return px.copy() if px.ndim == 2 else px.transpose(2, 0, 1).copy()


def read_pnm(path) -> np.ndarray:
    return decode_pnm(Path(path).read_bytes())
