"""Fully connected ReLU network with hand-written backprop and Adam."""
from __future__ import annotations

import numpy as np


class MLP:
    """ReLU hidden layers, affine output.  Weights are stored (fan_in, fan_out)."""

    def __init__(self, sizes, rng=None, dtype=np.float64):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"bad layer sizes {sizes}")
        self.sizes = sizes
        self.dtype = np.dtype(dtype)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            # He init for ReLU layers
            self.weights.append((rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)).astype(self.dtype))
            self.biases.append(np.zeros(fan_out, dtype=self.dtype))

    @property
    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def _check(self, x):
        x = np.asarray(x, dtype=self.dtype)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[1] != self.sizes[0]:
            raise ValueError(f"input has {x.shape[1]} features, network expects {self.sizes[0]}")
        return x, squeeze

    def forward(self, x):
        x, squeeze = self._check(x)
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                np.maximum(h, 0, out=h)
        return h[0] if squeeze else h

    def forward_train(self, x):
        x, _ = self._check(x)
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0)
            acts.append(h)
        return h, acts

    def backward(self, acts, dout):
        """Gradients [dW0, db0, dW1, db1, ...] given dLoss/dOutput."""
        grads = [None] * (2 * len(self.weights))
        d = dout
        for i in range(len(self.weights) - 1, -1, -1):
            a_in = acts[i]
            grads[2 * i] = a_in.T @ d
            grads[2 * i + 1] = d.sum(axis=0)
            if i > 0:
                d = (d @ self.weights[i].T) * (acts[i] > 0)
        return grads

    def copy_from(self, other):
        for dst, src in zip(self.params, other.params):
            dst[...] = src

    def clone(self):
        new = MLP.__new__(MLP)
        new.sizes = list(self.sizes)
        new.dtype = self.dtype
        new.weights = [w.copy() for w in self.weights]
        new.biases = [b.copy() for b in self.biases]
        return new


def mse(pred, target):
    """(1/B) sum_i ||pred_i - target_i||^2 and its gradient w.r.t. pred."""
    diff = pred - target
    b = diff.shape[0]
    loss = float(np.sum(diff * diff) / b)
    return loss, (2.0 / b) * diff


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr = self.lr * np.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            np.multiply(g, g, out=g)
            v *= b2
            v += (1 - b2) * g
            # g is spent; reuse it as the update buffer
            np.sqrt(v, out=g)
            g += self.eps
            np.divide(m, g, out=g)
            g *= corr
            p -= g

def train_step(net: MLP, opt: Adam, x, y):
    """One MSE gradient step; returns the pre-step batch loss."""
    pred, acts = net.forward_train(x)
    y = np.asarray(y, dtype=net.dtype).reshape(pred.shape)
    loss, dpred = mse(pred, y)
    if not np.isfinite(loss):
        raise FloatingPointError(f"non-finite training loss {loss}")
    opt.step(net.backward(acts, dpred))
    return loss
