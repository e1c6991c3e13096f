"""Forward/backward pairs for the layers of the toy classifier.

Every ``*_forward`` returns ``(out, cache)`` and the matching
``*_backward(dout, cache)`` returns the input gradient (plus parameter
gradients where the layer has parameters).  Arrays are batched NCHW.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _im2col3x3(x):
    # (n, c, h, w) -> (n*h*w, c*9) for a 3x3 window, stride 1, zero padding 1
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * 9)


def conv3x3_forward(x, w, b):
    """3x3 convolution (cross-correlation), stride 1, 'same' zero padding.

    x: (n, c, h, w); w: (o, c, 3, 3); b: (o,)
    """
    n, _, h, wd = x.shape
    cols = _im2col3x3(x)
    out = cols @ w.reshape(w.shape[0], -1).T
    if b is not None:
        out += b
    out = out.reshape(n, h, wd, -1).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out), (x.shape, cols, w)


def conv3x3_backward(dout, cache, need_dx=True):
    x_shape, cols, w = cache
    o = w.shape[0]
    d2 = dout.transpose(0, 2, 3, 1).reshape(-1, o)
    dw = (d2.T @ cols).reshape(w.shape)
    db = d2.sum(axis=0)
    dx = None
    if need_dx:
        # Adjoint of a same-padded stride-1 correlation: correlate with the
        # spatially flipped kernel, input/output channels swapped.
        w_flip = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        dx, _ = conv3x3_forward(dout, w_flip, None)
    return dx, dw, db


def relu_forward(x):
    return np.maximum(x, 0.0), x


def relu_backward(dout, cache):
    return dout * (cache > 0)


def maxpool2_forward(x):
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"2x2 max pooling needs even spatial size, got {h}x{w}")
    blocks = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    idx = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
    return out, (x.shape, idx)


def maxpool2_backward(dout, cache):
    (n, c, h, w), idx = cache
    blocks = np.zeros((n, c, h // 2, w // 2, 4))
    np.put_along_axis(blocks, idx[..., None], dout[..., None], axis=-1)
    return blocks.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)


def gap_forward(x):
    return x.mean(axis=(2, 3)), x.shape


def gap_backward(dout, shape):
    n, c, h, w = shape
    return np.broadcast_to((dout / (h * w))[:, :, None, None], shape).copy()


def linear_forward(x, w):
    """Bias-free linear layer: x (n, d), w (k, d) -> (n, k)."""
    return x @ w.T, (x, w)


def linear_backward(dout, cache):
    x, w = cache
    return dout @ w, dout.T @ x


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    loss = -log_p[np.arange(n), labels].mean()
    grad = np.exp(log_p)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n
