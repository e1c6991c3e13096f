"""A three-stage convolutional classifier with two DFM insertion slots.

Layout for a 3x64x64 input (widths default to 16/32/64)::

    conv3x3(3->16) relu maxpool2        -> 16x32x32
    conv3x3(16->32) relu maxpool2       -> 32x16x16
    [slot A]
    conv3x3(32->64) relu                -> 64x16x16
    [slot B]                            (CAM features)
    global average pool, linear(64->K)  (bias-free)

Slot A sits between stages like the bottleneck insertion of the full-size
models; slot B follows the last convolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers
from .dfm import DfmConfig, dfm_backward, dfm_forward
from .tensor_core import RngStream

PARAM_ORDER = ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "conv3_w", "conv3_b", "fc_w")
SLOTS = ("A", "B")
# Images live in [0, 1]; the first convolution sees them shifted to [-0.5, 0.5].
INPUT_CENTER = 0.5


@dataclass
class TrainConfig:
    lr: float = 0.05
    momentum: float = 0.9
    epochs: int = 10
    batch_size: int = 32
    seed: int = 1
    dfm_slots: tuple[str, ...] = SLOTS
    dfm: DfmConfig = field(default_factory=DfmConfig)

    def __post_init__(self):
        self.dfm_slots = tuple(self.dfm_slots)
        if not self.lr >= 0.0:
            raise ValueError("lr must be non-negative")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        unknown = set(self.dfm_slots) - set(SLOTS)
        if unknown:
            raise ValueError(f"unknown DFM slots {sorted(unknown)}")


@dataclass
class Network:
    params: dict[str, np.ndarray]
    num_classes: int
    widths: tuple[int, int, int] = (16, 32, 64)
    in_channels: int = 3

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return param_shapes(self.num_classes, self.widths, self.in_channels)

    def copy(self) -> "Network":
        return Network({k: v.copy() for k, v in self.params.items()}, self.num_classes,
                       tuple(self.widths), self.in_channels)

    @property
    def classifier(self) -> np.ndarray:
        return self.params["fc_w"]


def param_shapes(num_classes: int, widths=(16, 32, 64), in_channels: int = 3) -> dict:
    w1, w2, w3 = widths
    return {
        "conv1_w": (w1, in_channels, 3, 3), "conv1_b": (w1,),
        "conv2_w": (w2, w1, 3, 3), "conv2_b": (w2,),
        "conv3_w": (w3, w2, 3, 3), "conv3_b": (w3,),
        "fc_w": (num_classes, w3),
    }


def init_network(num_classes: int, seed: int, widths=(16, 32, 64), in_channels: int = 3) -> Network:
    """Fan-in scaled uniform weights drawn from the weight-init stream; zero biases."""
    rng = RngStream(seed, "weight-init")
    params = {}
    for name, shape in param_shapes(num_classes, widths, in_channels).items():
        if name.endswith("_b"):
            params[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:]))
            limit = np.sqrt(6.0 / fan_in)
            params[name] = rng.uniform(-limit, limit, size=shape)
    return Network(params, num_classes, tuple(widths), in_channels)


def forward(net: Network, x, cfg: TrainConfig | None = None, mode: str = "train",
            rng: RngStream | None = None, branches: dict | None = None):
    """Run the network on a batch ``(n, C, H, W)``.

    Returns ``(logits, features, cache)`` where ``features`` are the
    post-slot-B activations used for CAM.  ``branches`` maps slot name to a
    fixed DFM branch choice, replacing the random draw.  The cache records
    the branches actually used so a gradient check can replay them.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4 or x.shape[1] != net.in_channels:
        raise ValueError(f"expected a batch of shape (n, {net.in_channels}, H, W), got {x.shape}")
    if x.shape[2] % 4 or x.shape[3] % 4:
        raise ValueError(f"image size must be divisible by 4, got {x.shape[2:]}")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    slots = cfg.dfm_slots if cfg is not None else ()
    dfm_cfg = cfg.dfm if cfg is not None else None
    branches = branches or {}
    p = net.params
    cache = {"mode": mode, "slots": slots, "dfm": dfm_cfg, "branches": {}, "dfm_caches": {}}

    def slot(name, h):
        if name not in slots:
            return h
        out, dcache = dfm_forward(h, dfm_cfg, rng, mode, branch=branches.get(name))
        if dcache is not None:
            cache["dfm_caches"][name] = dcache
            cache["branches"][name] = dcache.selected_branch
        return out

    h, cache["conv1"] = layers.conv3x3_forward(x - INPUT_CENTER, p["conv1_w"], p["conv1_b"])
    h, cache["relu1"] = layers.relu_forward(h)
    h, cache["pool1"] = layers.maxpool2_forward(h)
    h, cache["conv2"] = layers.conv3x3_forward(h, p["conv2_w"], p["conv2_b"])
    h, cache["relu2"] = layers.relu_forward(h)
    h, cache["pool2"] = layers.maxpool2_forward(h)
    h = slot("A", h)
    h, cache["conv3"] = layers.conv3x3_forward(h, p["conv3_w"], p["conv3_b"])
    h, cache["relu3"] = layers.relu_forward(h)
    features = slot("B", h)
    pooled, cache["gap"] = layers.gap_forward(features)
    logits, cache["fc"] = layers.linear_forward(pooled, p["fc_w"])
    return logits, features, cache


def backward(cache: dict, grad_logits, need_input_grad: bool = True):
    """Back-propagate ``grad_logits`` through a training-mode forward.

    Returns ``(grads, grad_input)``; ``grads`` is keyed like ``Network.params``.
    """
    if cache.get("mode") != "train":
        raise ValueError("backward needs the cache of a training-mode forward")
    grad_logits = np.asarray(grad_logits, dtype=np.float64)
    if grad_logits.shape != (cache["fc"][0].shape[0], cache["fc"][1].shape[0]):
        raise ValueError(f"gradient shape {grad_logits.shape} does not match the cached logits")
    grads = {}
    dfm_cfg = cache["dfm"]

    def slot(name, g):
        if name not in cache["slots"]:
            return g
        return dfm_backward(g, cache["dfm_caches"].get(name), dfm_cfg)

    d, grads["fc_w"] = layers.linear_backward(grad_logits, cache["fc"])
    d = layers.gap_backward(d, cache["gap"])
    d = slot("B", d)
    d = layers.relu_backward(d, cache["relu3"])
    d, grads["conv3_w"], grads["conv3_b"] = layers.conv3x3_backward(d, cache["conv3"])
    d = slot("A", d)
    d = layers.maxpool2_backward(d, cache["pool2"])
    d = layers.relu_backward(d, cache["relu2"])
    d, grads["conv2_w"], grads["conv2_b"] = layers.conv3x3_backward(d, cache["conv2"])
    d = layers.maxpool2_backward(d, cache["pool1"])
    d = layers.relu_backward(d, cache["relu1"])
    d, grads["conv1_w"], grads["conv1_b"] = layers.conv3x3_backward(d, cache["conv1"], need_dx=need_input_grad)
    return grads, d


def predict(net: Network, x, cfg: TrainConfig | None = None, rng: RngStream | None = None,
            batch_size: int = 64):
    """Eval-mode logits and CAM features for a (possibly large) batch."""
    logits, feats = [], []
    for start in range(0, len(x), batch_size):
        lg, ft, _ = forward(net, x[start:start + batch_size], cfg, mode="eval", rng=rng)
        logits.append(lg)
        feats.append(ft)
    return np.concatenate(logits), np.concatenate(feats)
