"""Offline-trained feed-forward regressor for per-server delay or energy."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mlp import MLP, Adam, train_step

FORMAT_VERSION = 1


class Standardizer:
    def __init__(self, mean, std):
        self.mean = np.asarray(mean, dtype=float)
        std = np.asarray(std, dtype=float)
        self.std = np.where(std > 0, std, 1.0)

    @classmethod
    def fit(cls, data):
        data = np.asarray(data, dtype=float)
        return cls(data.mean(axis=0), data.std(axis=0))

    def transform(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    def inverse(self, z):
        return np.asarray(z, dtype=float) * self.std + self.mean


@dataclass
class TrainingSet:
    X: np.ndarray
    y: np.ndarray

    @classmethod
    def from_samples(cls, samples, target="delay"):
        if target not in ("delay", "energy"):
            raise ValueError(f"unknown target {target!r}")
        X = np.array([s.features for s in samples], dtype=float)
        y = np.array([getattr(s, target) for s in samples], dtype=float)
        return cls(X, y)

    def __len__(self):
        return len(self.y)


class Estimator:
    """Network plus the input/target standardization it was trained with."""

    def __init__(self, net: MLP, x_norm: Standardizer, y_norm: Standardizer):
        self.net = net
        self.x_norm = x_norm
        self.y_norm = y_norm

    @property
    def n_features(self):
        return self.net.sizes[0]

    def predict_raw(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        z = self.net.forward(self.x_norm.transform(X))[:, 0]
        return self.y_norm.inverse(z)

    def predict(self, X):
        """Predictions clamped below at zero; one per row."""
        return np.maximum(self.predict_raw(X), 0.0)

    def save(self, path):
        path = Path(path)
        meta = {"version": FORMAT_VERSION, "sizes": self.net.sizes}
        arrays = {f"p{i}": p for i, p in enumerate(self.net.params)}
        with open(path, "wb") as fh:
            np.savez(fh, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
                     x_mean=self.x_norm.mean, x_std=self.x_norm.std,
                     y_mean=self.y_norm.mean, y_std=self.y_norm.std, **arrays)

    @classmethod
    def load(cls, path):
        with np.load(path) as data:
            meta = json.loads(bytes(data["meta"]).decode())
            if meta.get("version") != FORMAT_VERSION:
                raise ValueError(f"unsupported estimator format {meta.get('version')}")
            net = MLP(meta["sizes"])
            for i, p in enumerate(net.params):
                p[...] = data[f"p{i}"]
            x_norm = Standardizer(data["x_mean"], data["x_std"])
            y_norm = Standardizer(data["y_mean"], data["y_std"])
        return cls(net, x_norm, y_norm)


@dataclass
class FitResult:
    estimator: Estimator
    val_mse: float
    val_r2: float
    train_losses: list


def r2_score(y, pred):
    y = np.asarray(y, dtype=float)
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)


def fit_offline(data: TrainingSet, *, hidden=(64, 128, 128), epochs=20, batch_size=64,
                learning_rate=1e-3, seed=0, val_fraction=0.1, cosine=True) -> FitResult:
    """Standardize, split 90/10, train by minibatch Adam on MSE.

    With ``cosine`` the step size anneals from ``learning_rate`` to zero.
    """
    n = len(data)
    if n < 100:
        raise ValueError(f"need at least 100 samples, got {n}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_val = max(int(round(val_fraction * n)), 1)
    val_idx, tr_idx = order[:n_val], order[n_val:]
    X_tr, y_tr = data.X[tr_idx], data.y[tr_idx]
    x_norm = Standardizer.fit(X_tr)
    y_norm = Standardizer.fit(y_tr[:, None])
    Z_tr = x_norm.transform(X_tr)
    t_tr = y_norm.transform(y_tr[:, None])

    net = MLP([data.X.shape[1], *hidden, 1], rng)
    opt = Adam(net.params, lr=learning_rate)
    losses = []
    for epoch in range(epochs):
        if cosine:
            opt.lr = 0.5 * learning_rate * (1.0 + np.cos(np.pi * epoch / epochs))
        perm = rng.permutation(len(tr_idx))
        total = 0.0
        for start in range(0, len(perm), batch_size):
            b = perm[start:start + batch_size]
            total += train_step(net, opt, Z_tr[b], t_tr[b]) * len(b)
        losses.append(total / len(perm))

    est = Estimator(net, x_norm, y_norm)
    pred = est.predict_raw(data.X[val_idx])
    y_val = data.y[val_idx]
    return FitResult(est, float(np.mean((pred - y_val) ** 2)), r2_score(y_val, pred), losses)
