"""Synthetic federated learning task: multinomial logistic regression on
class-conditional Gaussian features, with Dirichlet label-skewed client
shards. Parameters are a flat vector of shape (n_classes * (n_features + 1))
holding the weight matrix and per-class bias.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


def param_count(n_classes: int, n_features: int) -> int:
    return n_classes * (n_features + 1)


def init_params(n_classes: int, n_features: int) -> np.ndarray:
    return np.zeros(param_count(n_classes, n_features))


def make_class_means(rng: np.random.Generator, n_classes: int, n_features: int,
                     scale: float) -> np.ndarray:
    return rng.normal(0.0, 1.0, (n_classes, n_features)) * scale


def make_eval_set(rng: np.random.Generator, means: np.ndarray, n_samples: int,
                  noise: float) -> tuple[np.ndarray, np.ndarray]:
    """Held-out evaluation set with a near-balanced label mix."""
    n_classes, n_features = means.shape
    y = np.arange(n_samples) % n_classes
    x = means[y] + rng.normal(0.0, 1.0, (n_samples, n_features)) * noise
    return x, y


def make_shard(rng: np.random.Generator, means: np.ndarray, size: int,
               dirichlet_alpha: float, noise: float) -> tuple[np.ndarray, np.ndarray]:
    """One client's label-skewed shard (labels ~ Dirichlet-mixed categorical)."""
    n_classes, n_features = means.shape
    mix = rng.dirichlet(np.full(n_classes, dirichlet_alpha))
    y = rng.choice(n_classes, size=size, p=mix)
    x = means[y] + rng.normal(0.0, 1.0, (size, n_features)) * noise
    return x, y


def _logits(params: np.ndarray, x: np.ndarray, n_classes: int) -> np.ndarray:
    w = params.reshape(n_classes, -1)
    return x @ w[:, :-1].T + w[:, -1]


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(params: np.ndarray, x: np.ndarray, y: np.ndarray,
                  n_classes: int) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its flat gradient over a batch."""
    n = len(x)
    probs = _softmax(_logits(params, x, n_classes))
    loss = float(-np.mean(np.log(probs[np.arange(n), y] + 1e-300)))
    probs[np.arange(n), y] -= 1.0
    grad_w = probs.T @ x / n
    grad_b = probs.mean(axis=0)
    return loss, np.concatenate([grad_w, grad_b[:, None]], axis=1).ravel()


def sgd_steps(params: np.ndarray, x: np.ndarray, y: np.ndarray, steps: int,
              lr: float, batch: int, n_classes: int) -> np.ndarray:
    """Run minibatch SGD, cycling deterministically through the shard."""
    params = params.copy()
    n = len(x)
    for step in range(steps):
        idx = np.arange(step * batch, (step + 1) * batch) % n
        _, grad = loss_and_grad(params, x[idx], y[idx], n_classes)
        params -= lr * grad
    return params


def accuracy(params: np.ndarray, x: np.ndarray, y: np.ndarray,
             n_classes: int) -> float:
    return float(np.mean(_logits(params, x, n_classes).argmax(axis=1) == y))


def fedavg_aggregate(updates: Sequence[tuple[np.ndarray, int]]) -> np.ndarray:
    """Sample-count-weighted mean of parameter deltas."""
    if not updates:
        raise ValueError("cannot aggregate zero updates")
    shape = updates[0][0].shape
    total = 0
    acc = np.zeros(shape)
    for delta, n_samples in updates:
        if delta.shape != shape:
            raise ValueError(f"update shape {delta.shape} != {shape}")
        if n_samples < 1:
            raise ValueError("sample counts must be positive")
        acc += delta * n_samples
        total += n_samples
    return acc / total
