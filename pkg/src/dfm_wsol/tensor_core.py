"""Dense feature-map primitives and seeded random streams.

Feature maps are plain float64 numpy arrays laid out channel-major,
``(c, h, w)``, optionally with a leading batch axis ``(n, c, h, w)``.
Channel vectors are ``(c,)`` (or ``(n, c)``) and spatial maps ``(h, w)``
(or ``(n, h, w)``).  Every operation here works on the trailing axes so
that the same code serves single samples and batches.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

DTYPE = np.float64

STREAM_LABELS = {"data-gen": 0, "weight-init": 1, "dfm-select": 2, "shuffle": 3}


def as_feature_map(x) -> np.ndarray:
    """Validate and return ``x`` as a float64 ``(..., c, h, w)`` array."""
    arr = np.asarray(x, dtype=DTYPE)
    if arr.ndim not in (3, 4):
        raise ValueError(f"feature map must be (c,h,w) or (n,c,h,w), got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ValueError(f"feature map has an empty axis: {arr.shape}")
    check_finite(arr, "feature map")
    return arr


def check_finite(arr: np.ndarray, what: str = "array") -> None:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite values")


def _mean(F: np.ndarray, axis) -> np.ndarray:
    # Two-pass mean: the residual pass makes the mean of a constant block
    # exact, so pooling a broadcast map returns the original values bit-for-bit.
    m = F.mean(axis=axis, keepdims=True)
    m = m + (F - m).mean(axis=axis, keepdims=True)
    return np.squeeze(m, axis=axis)


def gap(F: np.ndarray) -> np.ndarray:
    """Global average pooling: per-channel mean over the spatial axes."""
    return _mean(np.asarray(F, dtype=DTYPE), (-2, -1))


def cap(F: np.ndarray) -> np.ndarray:
    """Channel average pooling: per-position mean over channels."""
    return _mean(np.asarray(F, dtype=DTYPE), -3)


def tanh_map(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def broadcast_channel(v: np.ndarray, h: int, w: int) -> np.ndarray:
    """Expand a channel vector ``(..., c)`` to a constant-per-channel map ``(..., c, h, w)``."""
    if h < 1 or w < 1:
        raise ValueError("h and w must be >= 1")
    v = np.asarray(v, dtype=DTYPE)
    return np.broadcast_to(v[..., None, None], v.shape + (h, w)).copy()


def broadcast_spatial(m: np.ndarray, c: int) -> np.ndarray:
    """Repeat a spatial map ``(..., h, w)`` across ``c`` channels."""
    if c < 1:
        raise ValueError("c must be >= 1")
    m = np.asarray(m, dtype=DTYPE)
    shape = m.shape[:-2] + (c,) + m.shape[-2:]
    return np.broadcast_to(m[..., None, :, :], shape).copy()


def scale_add(s: float, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Elementwise ``s * X + Y``."""
    if X.shape != Y.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {Y.shape}")
    return s * X + Y


class RngStream:
    """A labelled Philox stream keyed by ``(seed, label, *extra)``.

    Philox is counter based, so the whole sequence is fixed by the key
    derived from ``SeedSequence([seed, label_code, *extra])`` and the
    position in the stream.  Distinct labels give independent streams.
    """

    def __init__(self, seed: int, label: str, *extra: int):
        if label not in STREAM_LABELS:
            raise ValueError(f"unknown stream label {label!r}; expected one of {sorted(STREAM_LABELS)}")
        if seed < 0 or seed >= 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = int(seed)
        self.label = label
        self.extra = tuple(int(e) for e in extra)
        ss = np.random.SeedSequence([self.seed, STREAM_LABELS[label], *self.extra])
        self.generator = np.random.Generator(np.random.Philox(ss))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, label={self.label!r}, extra={self.extra})"

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self.generator.uniform(low, high, size)

    def integers(self, low: int, high: int | None = None, size=None):
        return self.generator.integers(low, high, size)

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def get_state(self) -> dict:
        return self.generator.bit_generator.state

    def set_state(self, state: dict) -> None:
        self.generator.bit_generator.state = state

    def state_json(self) -> str:
        """Stream identity and position as one line of JSON."""
        return json.dumps({"seed": self.seed, "label": self.label, "extra": list(self.extra),
                           "state": _to_jsonable(self.get_state())}, sort_keys=True)

    @classmethod
    def from_state_json(cls, text: str) -> "RngStream":
        d = json.loads(text)
        stream = cls(d["seed"], d["label"], *d["extra"])
        stream.set_state(_from_jsonable(d["state"]))
        return stream


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return {"__uint64__": [int(v) for v in obj]}
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _from_jsonable(obj):
    if isinstance(obj, dict):
        if set(obj) == {"__uint64__"}:
            return np.array(obj["__uint64__"], dtype=np.uint64)
        return {k: _from_jsonable(v) for k, v in obj.items()}
    return obj


def bernoulli(rng: RngStream, p: float) -> bool:
    """One biased coin flip; advances ``rng`` by exactly one uniform draw."""
    if not 0.0 <= p <= 1.0 or math.isnan(p):
        raise ValueError(f"probability must lie in [0, 1], got {p}")
    return bool(rng.uniform() < p)


def save_tensor_text(path, F: np.ndarray) -> None:
    """Write a ``(c, h, w)`` map as the ``"c h w"`` header plus values text format."""
    F = as_feature_map(F)
    if F.ndim != 3:
        raise ValueError("golden files hold a single (c,h,w) map")
    c, h, w = F.shape
    body = " ".join(repr(float(v)) for v in F.ravel())
    Path(path).write_text(f"{c} {h} {w}\n{body}\n")


def load_tensor_text(path) -> np.ndarray:
    tokens = Path(path).read_text().split()
    if len(tokens) < 3:
        raise ValueError(f"{path}: missing 'c h w' header")
    c, h, w = (int(t) for t in tokens[:3])
    values = tokens[3:]
    if len(values) != c * h * w:
        raise ValueError(f"{path}: expected {c * h * w} values, found {len(values)}")
    return as_feature_map(np.array([float(v) for v in values], dtype=DTYPE).reshape(c, h, w))
