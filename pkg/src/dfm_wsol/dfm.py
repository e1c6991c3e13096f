"""Dual-attention focused module: parameter-free attention erasing with
cross-branch compensation.

The module reads a feature map, builds a channel branch (global average
pooling) and a position branch (channel average pooling), turns each into
a tanh enhancement map and a thresholded 0/1 mask map, strengthens the
ring of positions around masked cells, fuses the enhancement of one branch
into the mask of the other, and feeds one of the two fused maps back into
the features.  All functions accept a single ``(c, h, w)`` map or a batch
``(n, c, h, w)``; attention and masks are per sample, while the branch
choice is one coin flip per call.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .tensor_core import (
    RngStream,
    as_feature_map,
    bernoulli,
    broadcast_channel,
    broadcast_spatial,
    cap,
    gap,
    scale_add,
    tanh_map,
)

APPLY_MODES = ("additive", "multiplicative")
BRANCH_MODES = ("dual", "channel", "position")
FUSION_MODES = ("cross", "self", "none")


@dataclass(frozen=True)
class DfmConfig:
    """Hyperparameters of the module.

    ``branches``, ``fusion`` and ``focus`` exist for ablations; the defaults
    (dual branches, cross fusion, neighbour focus on) are the full module.
    """

    alpha: float = 0.85
    beta: float = 0.95
    omega: float = 0.15
    delta: float = 0.6
    gamma: float = 0.4
    tau: float = 0.70
    apply_mode: str = "multiplicative"
    active_in_eval: bool = False
    branches: str = "dual"
    fusion: str = "cross"
    focus: bool = True

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must lie in [0, 1], got {self.tau}")
        for name in ("omega", "delta", "gamma"):
            if not getattr(self, name) >= 0.0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.apply_mode not in APPLY_MODES:
            raise ValueError(f"apply_mode must be one of {APPLY_MODES}")
        if self.branches not in BRANCH_MODES:
            raise ValueError(f"branches must be one of {BRANCH_MODES}")
        if self.fusion not in FUSION_MODES:
            raise ValueError(f"fusion must be one of {FUSION_MODES}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DfmCache:
    """Intermediates of a training-mode forward pass, consumed by :func:`dfm_backward`."""

    selected_branch: str
    F_in: np.ndarray
    F_module: np.ndarray
    C_A: np.ndarray
    P_A: np.ndarray
    C_E: np.ndarray
    P_E: np.ndarray
    C_M: np.ndarray
    P_M_raw: np.ndarray
    P_M: np.ndarray


def _threshold_mask(att: np.ndarray, ratio: float, axes: tuple[int, ...]) -> np.ndarray:
    peak = att.max(axis=axes, keepdims=True)
    mask = np.where(att >= ratio * peak, 0.0, 1.0)
    # No positive peak: nothing to erase.
    return np.where(peak <= 0.0, 1.0, mask)


def channel_mask(C_A: np.ndarray, alpha: float) -> np.ndarray:
    """0 for channels whose mean reaches ``alpha`` times the largest mean, else 1."""
    C_A = np.asarray(C_A, dtype=np.float64)
    if C_A.size == 0:
        raise ValueError("empty channel attention")
    return _threshold_mask(C_A, alpha, (-1,))


def position_mask(P_A: np.ndarray, beta: float) -> np.ndarray:
    """0 for positions whose mean reaches ``beta`` times the largest mean, else 1."""
    P_A = np.asarray(P_A, dtype=np.float64)
    if P_A.size == 0:
        raise ValueError("empty position attention")
    return _threshold_mask(P_A, beta, (-2, -1))


def dilate8(region: np.ndarray) -> np.ndarray:
    """Boolean 3x3 (8-neighbourhood) dilation over the last two axes, clipped at borders."""
    region = np.asarray(region, dtype=bool)
    pad = [(0, 0)] * (region.ndim - 2) + [(1, 1), (1, 1)]
    p = np.pad(region, pad)
    h, w = region.shape[-2:]
    out = np.zeros_like(region)
    for di in range(3):
        for dj in range(3):
            out |= p[..., di:di + h, dj:dj + w]
    return out


def focus_delta(P_M_raw: np.ndarray, omega: float) -> np.ndarray:
    """The neighbour focused matrix: ``omega`` on the unmasked ring around masked cells."""
    P_M_raw = np.asarray(P_M_raw, dtype=np.float64)
    if not np.all((P_M_raw == 0.0) | (P_M_raw == 1.0)):
        raise ValueError("position mask must contain only 0 and 1")
    masked = P_M_raw == 0.0
    ring = dilate8(masked) & ~masked
    return np.where(ring, omega, 0.0)


def neighbor_focus(P_M_raw: np.ndarray, omega: float) -> np.ndarray:
    """Strengthened position mask ``P'_M + dM``; values in {0, 1, 1 + omega}."""
    return P_M_raw + focus_delta(P_M_raw, omega)


def fuse(C_M, P_E, C_E, P_M, cfg: DfmConfig, c: int, h: int, w: int):
    """Cross-branch fusion, returning ``(C_ME, P_ME)`` as ``(..., c, h, w)`` maps.

    ``C_ME = delta * P_E~ + C_M~`` and ``P_ME = gamma * C_E~ + P_M~`` where ``~``
    is broadcasting to the full feature shape.  ``cfg.fusion`` selects the
    ablation variants: ``"self"`` pairs each mask with its own branch's
    enhancement, ``"none"`` drops the enhancement term.
    """
    C_M, C_E = np.asarray(C_M, dtype=np.float64), np.asarray(C_E, dtype=np.float64)
    P_M, P_E = np.asarray(P_M, dtype=np.float64), np.asarray(P_E, dtype=np.float64)
    if C_M.shape[-1] != c or C_E.shape[-1] != c:
        raise ValueError(f"channel maps must have {c} channels")
    if P_M.shape[-2:] != (h, w) or P_E.shape[-2:] != (h, w):
        raise ValueError(f"spatial maps must be {h}x{w}")

    C_M_full = broadcast_channel(C_M, h, w)
    P_M_full = broadcast_spatial(P_M, c)
    if cfg.fusion == "cross":
        C_ME = scale_add(cfg.delta, broadcast_spatial(P_E, c), C_M_full)
        P_ME = scale_add(cfg.gamma, broadcast_channel(C_E, h, w), P_M_full)
    elif cfg.fusion == "self":
        C_ME = scale_add(cfg.delta, broadcast_channel(C_E, h, w), C_M_full)
        P_ME = scale_add(cfg.gamma, broadcast_spatial(P_E, c), P_M_full)
    else:
        C_ME, P_ME = C_M_full, P_M_full
    return C_ME, P_ME


def select_branch(cfg: DfmConfig, rng: RngStream | None) -> str:
    """Pick the fused map to feed back: position with probability ``tau``."""
    if cfg.branches != "dual":
        return cfg.branches
    if rng is None:
        raise ValueError("a random stream is required to select the DFM branch")
    return "position" if bernoulli(rng, cfg.tau) else "channel"


def dfm_forward(F_in, cfg: DfmConfig, rng: RngStream | None, mode: str = "train",
                branch: str | None = None):
    """Apply the module to ``F_in``.

    Returns ``(F_out, cache)``.  In eval mode with ``cfg.active_in_eval``
    false the input is returned unchanged and the cache is ``None``.
    Passing ``branch`` ("channel" or "position") replays a fixed draw
    instead of consuming ``rng``.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    F_in = as_feature_map(F_in)
    if mode == "eval" and not cfg.active_in_eval:
        return F_in, None

    c, h, w = F_in.shape[-3:]
    C_A, P_A = gap(F_in), cap(F_in)
    C_E, P_E = tanh_map(C_A), tanh_map(P_A)
    C_M = channel_mask(C_A, cfg.alpha)
    P_M_raw = position_mask(P_A, cfg.beta)
    P_M = neighbor_focus(P_M_raw, cfg.omega) if cfg.focus else P_M_raw
    C_ME, P_ME = fuse(C_M, P_E, C_E, P_M, cfg, c, h, w)

    if branch is None:
        branch = select_branch(cfg, rng)
    elif branch not in ("channel", "position"):
        raise ValueError(f"branch must be 'channel' or 'position', got {branch!r}")
    F_module = P_ME if branch == "position" else C_ME

    if cfg.apply_mode == "additive":
        F_out = F_in + F_module
    else:
        F_out = F_in * F_module
    if mode == "eval":
        return F_out, None
    cache = DfmCache(branch, F_in, F_module, C_A, P_A, C_E, P_E, C_M, P_M_raw, P_M)
    return F_out, cache


def _enhancement_source(branch: str, cfg: DfmConfig) -> tuple[str | None, float]:
    """Which enhancement map (``"spatial"``/``"channel"``) sits in the fed-back map, and its coefficient."""
    if cfg.fusion == "none":
        return None, 0.0
    coef = cfg.delta if branch == "channel" else cfg.gamma
    cross = cfg.fusion == "cross"
    if branch == "channel":
        return ("spatial" if cross else "channel"), coef
    return ("channel" if cross else "spatial"), coef


def dfm_backward(grad_out, cache: DfmCache | None, cfg: DfmConfig) -> np.ndarray:
    """Gradient of the loss with respect to ``F_in``.

    Mask maps and the focused matrix are piecewise constant in ``F_in`` and
    contribute nothing; the gradient flows through the identity (additive)
    or product (multiplicative) path and through the tanh enhancement term.
    """
    if cache is None:
        raise ValueError("dfm_backward needs the cache of a training-mode forward")
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != cache.F_in.shape:
        raise ValueError(f"gradient shape {grad_out.shape} does not match cached input {cache.F_in.shape}")

    if cfg.apply_mode == "additive":
        grad_in = grad_out.copy()
        grad_module = grad_out
    else:
        grad_in = grad_out * cache.F_module
        grad_module = grad_out * cache.F_in

    source, coef = _enhancement_source(cache.selected_branch, cfg)
    c, h, w = grad_out.shape[-3:]
    if source == "spatial" and coef != 0.0:
        d_att = coef * grad_module.sum(axis=-3) * (1.0 - cache.P_E ** 2)
        grad_in += broadcast_spatial(d_att / c, c)
    elif source == "channel" and coef != 0.0:
        d_att = coef * grad_module.sum(axis=(-2, -1)) * (1.0 - cache.C_E ** 2)
        grad_in += broadcast_channel(d_att / (h * w), h, w)
    return grad_in
