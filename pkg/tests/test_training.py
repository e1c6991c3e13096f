import dataclasses

import numpy as np
import pytest

from dfm_wsol.checkpoint import (
    MAGIC, Checkpoint, CheckpointError, decode_checkpoint, encode_checkpoint, load_checkpoint,
    save_checkpoint,
)
from dfm_wsol.dfm import DfmConfig
from dfm_wsol.toy_net import PARAM_ORDER, TrainConfig, init_network
from dfm_wsol.training import TrainState, train

WIDTHS = (4, 6, 8)


def _data(n=24, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    images = rng.integers(0, 60, size=(n, 3, 8, 8), dtype=np.uint8)
    images[labels == 1, 0] += 150      # class 1 is redder
    return images, labels


def _cfg(**kw):
    base = dict(lr=0.05, epochs=3, batch_size=8, seed=3, dfm=DfmConfig())
    base.update(kw)
    return TrainConfig(**base)


def test_training_reduces_loss():
    images, labels = _data()
    net = init_network(2, 3, WIDTHS)
    _, hist = train(net, images, labels, _cfg(epochs=6))
    assert [h.epoch for h in hist] == list(range(1, 7))
    assert hist[-1].loss < hist[0].loss


def test_training_is_deterministic():
    images, labels = _data()
    a, b = init_network(2, 3, WIDTHS), init_network(2, 3, WIDTHS)
    train(a, images, labels, _cfg())
    train(b, images, labels, _cfg())
    assert all(np.array_equal(a.params[k], b.params[k]) for k in PARAM_ORDER)


def test_momentum_update_rule():
    images, labels = _data(8)
    cfg = _cfg(epochs=1, batch_size=8, dfm_slots=())
    net = init_network(2, 3, WIDTHS)
    before = net.copy()
    state = TrainState.fresh(net, cfg)
    train(net, images, labels, cfg, state)
    # One batch from zero velocity: v = -lr * g, p += v.
    for k in PARAM_ORDER:
        np.testing.assert_allclose(net.params[k] - before.params[k], state.velocity[k], atol=1e-15)


@pytest.mark.parametrize("labels", [np.array([0, 5]), np.array([-1, 0])])
def test_training_rejects_bad_labels(labels):
    net = init_network(2, 1, WIDTHS)
    with pytest.raises(ValueError):
        train(net, np.zeros((2, 3, 8, 8), np.uint8), labels, _cfg())


def test_checkpoint_round_trip_is_exact(tmp_path):
    images, labels = _data()
    cfg = _cfg(epochs=2)
    net = init_network(2, 3, WIDTHS)
    state = TrainState.fresh(net, cfg)
    train(net, images, labels, cfg, state)
    ckpt = Checkpoint.from_state(state, cfg)
    save_checkpoint(tmp_path / "m.ckpt", ckpt)
    data = (tmp_path / "m.ckpt").read_bytes()
    assert data.startswith(MAGIC)
    back = load_checkpoint(tmp_path / "m.ckpt")
    assert back.train_config == cfg and back.epoch == 2 and back.history == state.history
    for k in PARAM_ORDER:
        assert np.array_equal(back.net.params[k], net.params[k])
        assert np.array_equal(back.velocity[k], state.velocity[k])
    assert encode_checkpoint(back) == data


def test_resume_matches_uninterrupted_training():
    images, labels = _data()
    full_cfg = _cfg(epochs=4)
    full = init_network(2, 3, WIDTHS)
    train(full, images, labels, full_cfg)

    half_cfg = dataclasses.replace(full_cfg, epochs=2)
    part = init_network(2, 3, WIDTHS)
    state = TrainState.fresh(part, half_cfg)
    train(part, images, labels, half_cfg, state)
    ckpt = decode_checkpoint(encode_checkpoint(Checkpoint.from_state(state, half_cfg)))
    resumed = ckpt.to_state()
    train(resumed.net, images, labels, full_cfg, resumed)
    assert all(np.array_equal(full.params[k], resumed.net.params[k]) for k in PARAM_ORDER)


def _blob(tmp_path):
    images, labels = _data(8)
    cfg = _cfg(epochs=1)
    net = init_network(2, 3, WIDTHS)
    state = TrainState.fresh(net, cfg)
    train(net, images, labels, cfg, state)
    return encode_checkpoint(Checkpoint.from_state(state, cfg))


def test_checkpoint_errors(tmp_path):
    blob = _blob(tmp_path)
    with pytest.raises(CheckpointError, match="version"):
        decode_checkpoint(b"DFMCKPT2" + blob[8:])
    with pytest.raises(CheckpointError, match="bad magic"):
        decode_checkpoint(b"NOTACKPT" + blob[8:])
    with pytest.raises(CheckpointError, match="truncated"):
        decode_checkpoint(blob[:-3])
    with pytest.raises(CheckpointError, match="trailing"):
        decode_checkpoint(blob + b"\0")
    with pytest.raises(CheckpointError, match="cannot read"):
        load_checkpoint(tmp_path / "absent.ckpt")


def test_zero_learning_rate_leaves_parameters_unchanged():
    images, labels = _data()
    net = init_network(2, 3, WIDTHS)
    before = net.copy()
    train(net, images, labels, _cfg(lr=0.0, epochs=2))
    assert all(np.array_equal(net.params[k], before.params[k]) for k in PARAM_ORDER)
