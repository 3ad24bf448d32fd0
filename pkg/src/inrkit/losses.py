"""Field-matching losses (mean-reduced) with analytic gradients.

- mse: squared error on raw predictions.
- bce: binary cross entropy on logits, computed in the numerically stable
  softplus form; gradient (sigmoid(z) - y) / N.
- focal: focusing variant of bce on logits; down-weights easy samples.

Each returns (scalar loss, gradient w.r.t. the predictions/logits array).
"""
from __future__ import annotations

import numpy as np

from .mlp import _sigmoid


def _check(pred: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {target.shape}")
    if pred.size == 0:
        raise ValueError("empty prediction batch")
    return pred, target


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    pred, target = _check(pred, target)
    diff = pred - target
    loss = float(np.mean(diff * diff))
    return loss, (2.0 / diff.size) * diff


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0.0)


def bce_loss(logits: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    logits, target = _check(logits, target)
    if ((target < 0.0) | (target > 1.0)).any():
        raise ValueError("bce targets must lie in [0, 1]")
    loss = float(np.mean(_softplus(logits) - logits * target))
    grad = (_sigmoid(logits) - target) / logits.size
    return loss, grad


def focal_loss(logits: np.ndarray, target: np.ndarray, alpha: float = 0.25,
               gamma: float = 2.0) -> tuple[float, np.ndarray]:
    logits, target = _check(logits, target)
    if ((target < 0.0) | (target > 1.0)).any():
        raise ValueError("focal targets must lie in [0, 1]")
    p = _sigmoid(logits)
    q = 1.0 - p
    log_p = -_softplus(-logits)
    log_q = -_softplus(logits)
    n = logits.size
    per = -(alpha * q ** gamma * target * log_p
            + (1.0 - alpha) * p ** gamma * (1.0 - target) * log_q)
    loss = float(np.mean(per))
    # d/dz of the two terms; finite for any z since p*log_p -> 0 at the tails
    grad = (target * alpha * q ** gamma * (gamma * p * log_p - q)
            + (1.0 - target) * (1.0 - alpha) * p ** gamma * (p - gamma * q * log_q)) / n
    return loss, grad


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray,
                          target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross entropy over rows; ``target`` is (N, C) soft labels or (N,)
    class indices.  Gradient is (softmax - target) / N."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.size == 0:
        raise ValueError("logits must be a non-empty (N, C) matrix")
    target = np.asarray(target)
    if target.ndim == 1:
        if ((target < 0) | (target >= logits.shape[1])).any():
            raise ValueError("class index out of range")
        onehot = np.zeros_like(logits)
        onehot[np.arange(len(target)), target.astype(int)] = 1.0
        target = onehot
    if target.shape != logits.shape:
        raise ValueError("target shape does not match logits")
    z = logits - logits.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = len(logits)
    loss = float(-np.sum(target * log_probs) / n)
    return loss, (np.exp(log_probs) - target) / n


LOSSES = {"mse": mse_loss, "bce": bce_loss, "focal": focal_loss}


def field_loss(kind: str, pred: np.ndarray, target: np.ndarray, *,
               alpha: float = 0.25, gamma: float = 2.0) -> tuple[float, np.ndarray]:
    if kind == "focal":
        return focal_loss(pred, target, alpha=alpha, gamma=gamma)
    try:
        fn = LOSSES[kind]
    except KeyError:
        raise ValueError(f"unknown loss kind {kind!r}") from None
    return fn(pred, target)
