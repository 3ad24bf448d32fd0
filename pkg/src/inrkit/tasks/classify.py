"""Shape classification on embeddings, with element-stitching augmentation.

The classifier is a three-stage MLP (E -> 512 -> 256 -> classes) with
batchnorm + ReLU between stages and a softmax head.  Training mixes each
batch element with a random partner: coordinates are taken from the first
embedding with probability q (one q per pair) and the label becomes the
q-weighted blend, which regularizes the otherwise tiny embedding datasets.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from ..losses import softmax, softmax_cross_entropy
from ..mlp import (
    LayerSpec,
    MlpParams,
    commit_batchnorm,
    init_mlp,
    mlp_backward,
    mlp_forward,
)
from ..optim import LrSchedule, optimizer_init, optimizer_step, schedule_lr
from ..rng import stream


@dataclass(frozen=True)
class ClassifierConfig:
    embed_dim: int
    num_classes: int
    hidden_dims: tuple[int, ...] = (512, 256)
    epochs: int = 150
    batch_size: int = 256
    max_lr: float = 1e-4
    weight_decay: float = 1e-2
    stitchup: bool = True

    def __post_init__(self):
        if self.embed_dim < 1 or self.num_classes < 2:
            raise ValueError("need a positive embedding width and >= 2 classes")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")

    def layer_specs(self) -> list[LayerSpec]:
        dims = (self.embed_dim,) + self.hidden_dims
        specs = [LayerSpec(dims[i], dims[i + 1], "relu", batchnorm=True)
                 for i in range(len(self.hidden_dims))]
        specs.append(LayerSpec(dims[-1], self.num_classes, "none"))
        return specs


@dataclass
class ClassifierParams:
    config: ClassifierConfig
    net: MlpParams


def estitchup_augment(e1: np.ndarray, label1: np.ndarray, e2: np.ndarray,
                      label2: np.ndarray, seed) -> tuple[np.ndarray, np.ndarray]:
    """Stitch two embeddings element-wise and blend their label vectors.

    One mixing weight q ~ U(0,1) is drawn per pair; each coordinate comes
    from ``e1`` with probability q, and the soft label is
    q*label1 + (1-q)*label2.  ``seed`` is an int or a Generator.
    """
    rng = seed if hasattr(seed, "uniform") else stream(seed, "stitchup")
    e1 = np.asarray(e1, dtype=np.float64)
    e2 = np.asarray(e2, dtype=np.float64)
    label1 = np.asarray(label1, dtype=np.float64)
    label2 = np.asarray(label2, dtype=np.float64)
    if e1.shape != e2.shape:
        raise ValueError("embedding lengths differ")
    if label1.shape != label2.shape:
        raise ValueError("label lengths differ")
    q = rng.uniform()
    take_first = rng.random(size=e1.shape) < q
    return np.where(take_first, e1, e2), q * label1 + (1.0 - q) * label2


def _stitch_batch(embs: np.ndarray, onehots: np.ndarray,
                  rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Pair every batch element with a random partner and stitch them."""
    n = len(embs)
    partners = rng.integers(0, n, size=n)
    q = rng.uniform(size=(n, 1))
    take_first = rng.random(size=embs.shape) < q
    mixed = np.where(take_first, embs, embs[partners])
    labels = q * onehots + (1.0 - q) * onehots[partners]
    return mixed, labels


def classify(params: ClassifierParams, embeddings: np.ndarray) -> np.ndarray:
    """Class probabilities for one embedding (E,) or a batch (N, E)."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    single = embeddings.ndim == 1
    logits, _ = mlp_forward(params.net, np.atleast_2d(embeddings), mode="eval")
    probs = softmax(logits)
    return probs[0] if single else probs


def accuracy(params: ClassifierParams, embeddings: np.ndarray,
             labels: np.ndarray) -> float:
    preds = classify(params, embeddings).argmax(axis=1)
    return float(np.mean(preds == np.asarray(labels)))


def train_classifier(train_embs: np.ndarray, train_labels: np.ndarray,
                     val_embs: np.ndarray, val_labels: np.ndarray,
                     config: ClassifierConfig, seed: int = 0,
                     log_fn=None) -> tuple[ClassifierParams, dict]:
    """AdamW + one-cycle schedule; keeps the checkpoint with the highest
    validation accuracy."""
    train_embs = np.asarray(train_embs, dtype=np.float64)
    train_labels = np.asarray(train_labels)
    if len(train_embs) == 0 or len(val_embs) == 0:
        raise ValueError("empty split")
    if len(train_embs) != len(train_labels):
        raise ValueError("need one label per embedding")
    if train_embs.shape[1] != config.embed_dim:
        raise ValueError("embedding width does not match the config")
    if ((train_labels < 0) | (train_labels >= config.num_classes)).any():
        raise ValueError("label out of range")

    net = init_mlp(config.layer_specs(), stream(seed, "classifier-init"))
    params = ClassifierParams(config, net)
    onehots = np.zeros((len(train_labels), config.num_classes))
    onehots[np.arange(len(train_labels)), train_labels.astype(int)] = 1.0

    n = len(train_embs)
    steps_per_epoch = (n + config.batch_size - 1) // config.batch_size
    sched = LrSchedule(kind="one_cycle", max_lr=config.max_lr,
                       total_steps=config.epochs * steps_per_epoch)
    opt = optimizer_init("adamw", net.arrays(), lr=config.max_lr,
                         weight_decay=config.weight_decay)
    rng = stream(seed, "classifier-train")

    history = {"train_loss": [], "val_acc": [], "best_epoch": -1}
    best_acc = -1.0
    best_net = copy.deepcopy(net)
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            x, y = train_embs[idx], onehots[idx]
            if config.stitchup:
                x, y = _stitch_batch(x, y, rng)
            logits, cache = mlp_forward(net, x, mode="train")
            loss, dlogits = softmax_cross_entropy(logits, y)
            grads, _ = mlp_backward(net, cache, dlogits)
            optimizer_step(opt, net.arrays(), grads.arrays(),
                           lr=schedule_lr(sched, step))
            commit_batchnorm(net, cache)
            epoch_loss += loss
            step += 1
        history["train_loss"].append(epoch_loss / steps_per_epoch)
        val_acc = accuracy(params, val_embs, val_labels)
        history["val_acc"].append(val_acc)
        if val_acc > best_acc:
            best_acc = val_acc
            history["best_epoch"] = epoch
            best_net = copy.deepcopy(net)
        if log_fn is not None:
            log_fn(epoch, history["train_loss"][-1], val_acc)
    params.net = best_net
    return params, history
