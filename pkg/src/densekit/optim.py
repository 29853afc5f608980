"""Adam with classic L2 regularization added to the gradient of conv
weights only (biases and batchnorm affines are never decayed).
"""

import numpy as np


class AdamState:
    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]


def adam_step(state, params, weight_decay_lambda=0.0):
    """One update from the gradients currently stored on params.

    Effective gradient for conv weights is g + 2*lambda*w; the update is
    standard bias-corrected Adam.
    """
    if weight_decay_lambda < 0:
        raise ValueError("lambda must be >= 0")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for i, p in enumerate(params):
        g = p.grad
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(
                f"non-finite gradient in parameter {i} (role {p.role})")
        if weight_decay_lambda and p.role == "conv_weight":
            g = g + 2.0 * weight_decay_lambda * p.value
        state.m[i] = b1 * state.m[i] + (1 - b1) * g
        state.v[i] = b2 * state.v[i] + (1 - b2) * g * g
        mhat = state.m[i] / bc1
        vhat = state.v[i] / bc2
        p.value -= (state.lr * mhat / (np.sqrt(vhat) + state.epsilon)).astype(p.value.dtype)


def effective_gradients(params, weight_decay_lambda):
    """The decayed gradients adam_step would consume; exposed so tests
    can assert the decay exclusion rule directly."""
    out = []
    for p in params:
        g = p.grad
        if weight_decay_lambda and p.role == "conv_weight":
            g = g + 2.0 * weight_decay_lambda * p.value
        out.append(g)
    return out
