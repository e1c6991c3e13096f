"""SGD-with-momentum training of the toy network."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import layers
from .toy_net import Network, TrainConfig, backward, forward
from .tensor_core import RngStream

log = logging.getLogger(__name__)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    accuracy: float


@dataclass
class TrainState:
    """Everything needed to continue training bit-exactly."""

    net: Network
    velocity: dict[str, np.ndarray]
    epoch: int
    shuffle_rng: RngStream
    dfm_rng: RngStream
    history: list[EpochRecord] = field(default_factory=list)

    @classmethod
    def fresh(cls, net: Network, cfg: TrainConfig) -> "TrainState":
        return cls(
            net=net,
            velocity={k: np.zeros_like(v) for k, v in net.params.items()},
            epoch=0,
            shuffle_rng=RngStream(cfg.seed, "shuffle"),
            dfm_rng=RngStream(cfg.seed, "dfm-select"),
        )


def as_float_images(images) -> np.ndarray:
    images = np.asarray(images)
    if images.dtype == np.uint8:
        return images.astype(np.float64) / 255.0
    return images.astype(np.float64, copy=False)


def train_epoch(state: TrainState, images, labels, cfg: TrainConfig) -> EpochRecord:
    net = state.net
    n = len(labels)
    order = state.shuffle_rng.permutation(n)
    total_loss, correct = 0.0, 0
    for start in range(0, n, cfg.batch_size):
        idx = order[start:start + cfg.batch_size]
        x = as_float_images(images[idx])
        y = labels[idx]
        logits, _, cache = forward(net, x, cfg, mode="train", rng=state.dfm_rng)
        loss, grad_logits = layers.softmax_cross_entropy(logits, y)
        grads, _ = backward(cache, grad_logits, need_input_grad=False)
        for name, g in grads.items():
            v = state.velocity[name]
            v *= cfg.momentum
            v -= cfg.lr * g
            net.params[name] += v
        total_loss += loss * len(idx)
        correct += int((logits.argmax(axis=1) == y).sum())
    state.epoch += 1
    record = EpochRecord(state.epoch, total_loss / n, correct / n)
    state.history.append(record)
    return record


def train(net: Network, images, labels, cfg: TrainConfig, state: TrainState | None = None,
          on_epoch=None):
    """Train ``net`` in place for ``cfg.epochs`` total epochs.

    ``state`` resumes an interrupted run; ``on_epoch(state)`` is called after
    every epoch (e.g. to checkpoint).  Returns ``(net, history)``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        raise ValueError("empty training set")
    if len(images) != len(labels):
        raise ValueError("images and labels differ in length")
    if labels.min() < 0 or labels.max() >= net.num_classes:
        raise ValueError(f"labels must lie in [0, {net.num_classes})")
    if state is None:
        state = TrainState.fresh(net, cfg)
    elif state.net is not net:
        raise ValueError("resume state belongs to a different network")
    while state.epoch < cfg.epochs:
        rec = train_epoch(state, images, labels, cfg)
        log.info("epoch %d loss %.4f acc %.4f", rec.epoch, rec.loss, rec.accuracy)
        if on_epoch is not None:
            on_epoch(state)
    return net, state.history
