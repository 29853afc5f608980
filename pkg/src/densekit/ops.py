"""Differentiable primitive ops on dense NCHW arrays.

Every forward function returns (output, cache); the matching backward
function consumes the upstream gradient dY plus the cache and returns
the input gradient(s). All network arrays are float32; the finite
difference oracle promotes to float64 internally.
"""

import numpy as np

__all__ = [
    "ParamTensor", "BNState",
    "conv2d_forward", "conv2d_backward",
    "maxpool2x2_forward", "maxpool2x2_backward",
    "relu_forward", "relu_backward",
    "batchnorm_forward", "batchnorm_backward",
    "space_to_depth", "depth_to_space",
    "concat_channels_forward", "concat_channels_backward",
    "global_avg_pool_forward", "global_avg_pool_backward",
    "softmax_cross_entropy",
    "finite_diff_check",
]


class ParamTensor:
    """A learnable array with its gradient buddy.

    role is one of conv_weight, conv_bias, bn_gamma, bn_beta; only
    conv_weight receives L2 decay.
    """

    __slots__ = ("value", "grad", "role")

    def __init__(self, value, role):
        self.value = np.asarray(value, dtype=np.float32)
        self.grad = np.zeros_like(self.value)
        self.role = role

    def zero_grad(self):
        self.grad.fill(0.0)


class BNState:
    """Per-channel running statistics for one batchnorm layer."""

    def __init__(self, channels, momentum=0.9, epsilon=1e-5):
        if not 0.0 < momentum < 1.0:
            raise ValueError(f"momentum must be in (0,1), got {momentum}")
        if epsilon <= 0.0:
            raise ValueError(f"epsilon must be > 0, got {epsilon}")
        self.running_mean = np.zeros(channels, dtype=np.float32)
        self.running_var = np.ones(channels, dtype=np.float32)
        self.momentum = momentum
        self.epsilon = epsilon


def _check_nchw(x, name="x"):
    if x.ndim != 4:
        raise ValueError(f"{name} must be 4-D (n,c,h,w), got shape {x.shape}")


def conv2d_forward(x, w, b, stride=1, padding="same"):
    """Cross-correlation with per-channel bias.

    x: (n, c_in, h, w); w: (c_out, c_in, k, k); b: (c_out,).
    Supported: k in {1, 3}, stride 1, padding 'same' or 'valid'.
    """
    _check_nchw(x)
    n, c_in, h, wd = x.shape
    c_out, wc_in, k, k2 = w.shape
    if k != k2 or k not in (1, 3):
        raise ValueError(f"kernel must be square 1x1 or 3x3, got {k}x{k2}")
    if stride != 1:
        raise ValueError("only stride 1 is supported")
    if wc_in != c_in:
        raise ValueError(f"channel mismatch: input has {c_in}, weights expect {wc_in}")
    if padding == "same":
        pad = k // 2
    elif padding == "valid":
        pad = 0
        if h - k + 1 <= 0 or wd - k + 1 <= 0:
            raise ValueError(f"valid padding leaves non-positive spatial dims for {h}x{wd} input")
    else:
        raise ValueError(f"unknown padding {padding!r}")

    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    oh = h + 2 * pad - k + 1
    ow = wd + 2 * pad - k + 1
    y = np.empty((n, c_out, oh, ow), dtype=x.dtype)
    y[:] = b.reshape(1, c_out, 1, 1)
    # k*k shifted matmuls instead of im2col: same result, smaller temporaries
    for i in range(k):
        for j in range(k):
            patch = xp[:, :, i:i + oh, j:j + ow]
            # (n,c_in,oh,ow) x (c_out,c_in) summed over c_in
            y += np.einsum("nchw,oc->nohw", patch, w[:, :, i, j], optimize=True)
    cache = (xp, x.shape, w, pad)
    return y, cache


def conv2d_backward(dy, cache):
    """Returns (dx, dw, db)."""
    xp, x_shape, w, pad = cache
    c_out, c_in, k, _ = w.shape
    n, _, oh, ow = dy.shape
    dxp = np.zeros_like(xp)
    dw = np.zeros_like(w)
    for i in range(k):
        for j in range(k):
            patch = xp[:, :, i:i + oh, j:j + ow]
            dw[:, :, i, j] = np.einsum("nchw,nohw->oc", patch, dy, optimize=True)
            dxp[:, :, i:i + oh, j:j + ow] += np.einsum(
                "nohw,oc->nchw", dy, w[:, :, i, j], optimize=True)
    db = dy.sum(axis=(0, 2, 3))
    if pad:
        dx = dxp[:, :, pad:-pad, pad:-pad]
    else:
        dx = dxp
    # dxp may alias a padded copy; ensure shape matches the original input
    assert dx.shape == x_shape
    return dx, dw, db


def maxpool2x2_forward(x):
    """2x2/stride-2 max pool; odd trailing row/col dropped.

    Ties break toward the first element in row-major window order, so
    backward always routes the gradient to exactly one element per window.
    """
    _check_nchw(x)
    n, c, h, w = x.shape
    if h < 2 or w < 2:
        raise ValueError(f"spatial dims must be >= 2 to pool, got {h}x{w}")
    oh, ow = h // 2, w // 2
    xc = x[:, :, :oh * 2, :ow * 2]
    windows = xc.reshape(n, c, oh, 2, ow, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh, ow, 4)
    idx = windows.argmax(axis=-1)  # first max wins
    y = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    cache = (x.shape, idx)
    return y, cache


def maxpool2x2_backward(dy, cache):
    x_shape, idx = cache
    n, c, h, w = x_shape
    oh, ow = h // 2, w // 2
    dwin = np.zeros((n, c, oh, ow, 4), dtype=dy.dtype)
    np.put_along_axis(dwin, idx[..., None], dy[..., None], axis=-1)
    dx = np.zeros(x_shape, dtype=dy.dtype)
    dx[:, :, :oh * 2, :ow * 2] = (
        dwin.reshape(n, c, oh, ow, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh * 2, ow * 2))
    return dx


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dy, mask):
    return dy * mask


def batchnorm_forward(x, gamma, beta, state, mode):
    """Per-channel normalization over (n, h, w).

    Train mode uses batch statistics and updates the running stats by
    EMA (new = momentum * old + (1 - momentum) * batch); infer mode uses
    the running stats.
    """
    _check_nchw(x)
    n, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ValueError(f"gamma/beta must have shape ({c},)")
    eps = state.epsilon
    if mode == "train":
        if n * h * w < 2:
            raise ValueError("train-mode batchnorm needs at least 2 values per channel")
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        m = state.momentum
        state.running_mean = (m * state.running_mean + (1 - m) * mean).astype(np.float32)
        state.running_var = (m * state.running_var + (1 - m) * var).astype(np.float32)
    elif mode == "infer":
        mean = state.running_mean
        var = state.running_var
    else:
        raise ValueError(f"unknown mode {mode!r}")
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean.reshape(1, c, 1, 1)) * inv_std.reshape(1, c, 1, 1)
    y = gamma.reshape(1, c, 1, 1) * xhat + beta.reshape(1, c, 1, 1)
    cache = (xhat, inv_std, gamma, mode)
    return y, cache


def batchnorm_backward(dy, cache):
    """Returns (dx, dgamma, dbeta)."""
    xhat, inv_std, gamma, mode = cache
    n, c, h, w = dy.shape
    dgamma = (dy * xhat).sum(axis=(0, 2, 3))
    dbeta = dy.sum(axis=(0, 2, 3))
    if mode == "infer":
        dx = dy * (gamma * inv_std).reshape(1, c, 1, 1)
        return dx, dgamma, dbeta
    m = n * h * w
    dxhat = dy * gamma.reshape(1, c, 1, 1)
    dx = (inv_std.reshape(1, c, 1, 1) / m) * (
        m * dxhat
        - dxhat.sum(axis=(0, 2, 3), keepdims=True)
        - xhat * (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True))
    return dx, dgamma, dbeta


def space_to_depth(x, block):
    """Move each block x block spatial tile into block^2 channels.

    Output channel layout: for original channel c and tile offset
    (i, j), output channel = c * block^2 + i * block + j (row-major tile
    scan). Lossless; depth_to_space inverts it exactly.
    """
    _check_nchw(x)
    n, c, h, w = x.shape
    if block == 1:
        return x
    if h % block or w % block:
        raise ValueError(f"spatial dims {h}x{w} not divisible by block {block}")
    oh, ow = h // block, w // block
    return (x.reshape(n, c, oh, block, ow, block)
             .transpose(0, 1, 3, 5, 2, 4)
             .reshape(n, c * block * block, oh, ow))


def depth_to_space(x, block):
    """Exact inverse of space_to_depth."""
    _check_nchw(x)
    n, cb, oh, ow = x.shape
    if block == 1:
        return x
    if cb % (block * block):
        raise ValueError(f"channels {cb} not divisible by block^2")
    c = cb // (block * block)
    return (x.reshape(n, c, block, block, oh, ow)
             .transpose(0, 1, 4, 2, 5, 3)
             .reshape(n, c, oh * block, ow * block))


def concat_channels_forward(xs):
    """Concatenate along the channel axis; cache records split ranges."""
    if len(xs) == 0:
        raise ValueError("need at least one input")
    first = xs[0]
    for x in xs[1:]:
        if x.shape[0] != first.shape[0] or x.shape[2:] != first.shape[2:]:
            raise ValueError(f"batch/spatial mismatch: {x.shape} vs {first.shape}")
    y = np.concatenate(xs, axis=1)
    splits = np.cumsum([x.shape[1] for x in xs])[:-1]
    return y, splits


def concat_channels_backward(dy, splits):
    return np.split(dy, splits, axis=1)


def global_avg_pool_forward(x):
    _check_nchw(x)
    n, c, h, w = x.shape
    y = x.mean(axis=(2, 3), keepdims=True)
    return y, (h, w)


def global_avg_pool_backward(dy, cache):
    h, w = cache
    return np.broadcast_to(dy / (h * w), dy.shape[:2] + (h, w)).copy()


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch; logits shaped (n, C, 1, 1).

    Returns (loss, dlogits) with dlogits = (softmax - onehot) / n.
    Optional per-sample weights scale each sample's loss and gradient.
    """
    return weighted_softmax_cross_entropy(logits, labels, None)


def weighted_softmax_cross_entropy(logits, labels, sample_weights):
    n, num_classes = logits.shape[0], logits.shape[1]
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError(f"label out of range [0, {num_classes})")
    z = logits.reshape(n, num_classes).astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    expz = np.exp(z)
    p = expz / expz.sum(axis=1, keepdims=True)
    nll = -np.log(np.maximum(p[np.arange(n), labels], 1e-300))
    grad = p.copy()
    grad[np.arange(n), labels] -= 1.0
    if sample_weights is not None:
        sw = np.asarray(sample_weights, dtype=np.float64)
        nll = nll * sw
        grad = grad * sw[:, None]
    loss = float(nll.mean())
    dlogits = (grad / n).reshape(logits.shape).astype(logits.dtype)
    return loss, dlogits


def finite_diff_check(forward, backward, inputs, epsilon=1e-3, seed=0, max_probes=None):
    """Central-difference check of an op's backward pass.

    forward(*inputs) -> (y, cache); backward(dy, cache) -> per-input
    gradients (tuple, or a single array for one input). The scalar being
    differentiated is sum(P * y) for a fixed random projection P; the
    numeric side runs in float64. Returns the worst relative error over
    all probed input elements.
    """
    if not 1e-5 <= epsilon <= 1e-2:
        raise ValueError(f"epsilon must be in [1e-5, 1e-2], got {epsilon}")
    rng = np.random.default_rng(seed)
    inputs64 = [np.asarray(x, dtype=np.float64) for x in inputs]
    y, cache = forward(*inputs64)
    proj = rng.standard_normal(y.shape)
    grads = backward(proj, cache)
    if isinstance(grads, np.ndarray):
        grads = (grads,)
    worst = 0.0
    for x, g in zip(inputs64, grads):
        flat = x.reshape(-1)
        idxs = np.arange(flat.size)
        if max_probes is not None and flat.size > max_probes:
            idxs = rng.choice(flat.size, size=max_probes, replace=False)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + epsilon
            hi = float((forward(*inputs64)[0] * proj).sum())
            flat[i] = orig - epsilon
            lo = float((forward(*inputs64)[0] * proj).sum())
            flat[i] = orig
            numeric = (hi - lo) / (2 * epsilon)
            analytic = float(g.reshape(-1)[i])
            scale = max(abs(numeric), abs(analytic), 1.0)
            worst = max(worst, abs(numeric - analytic) / scale)
    return worst
