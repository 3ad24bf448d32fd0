"""Learned mappings between embedding spaces (e.g. partial -> complete shapes).

An 8-stage MLP of constant width E regresses target embeddings from source
embeddings under MSE.  Model selection listens to whatever the caller can
actually measure: by default the validation MSE, or a supplied score on the
predicted validation embeddings (typically chamfer distance of their decoded
reconstructions), with early stopping on that signal.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from ..losses import mse_loss
from ..mlp import (
    LayerSpec,
    MlpParams,
    commit_batchnorm,
    init_mlp,
    mlp_backward,
    mlp_forward,
)
from ..optim import optimizer_init, optimizer_step
from ..rng import stream


@dataclass(frozen=True)
class TransferConfig:
    embed_dim: int
    stages: int = 8
    lr: float = 1e-4
    weight_decay: float = 1e-4
    epochs: int = 200
    batch_size: int = 64
    patience: int = 25  # epochs without validation improvement before stopping

    def __post_init__(self):
        if self.embed_dim < 1 or self.stages < 2:
            raise ValueError("need a positive width and >= 2 stages")
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("epochs, batch_size, patience must be positive")

    def layer_specs(self) -> list[LayerSpec]:
        e = self.embed_dim
        specs = [LayerSpec(e, e, "relu", batchnorm=True)
                 for _ in range(self.stages - 1)]
        specs.append(LayerSpec(e, e, "none"))
        return specs


@dataclass
class TransferParams:
    config: TransferConfig
    net: MlpParams


def apply_transfer(params: TransferParams, embeddings: np.ndarray) -> np.ndarray:
    """Map one embedding (E,) or a batch (N, E) into the target space."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    single = embeddings.ndim == 1
    out, _ = mlp_forward(params.net, np.atleast_2d(embeddings), mode="eval")
    return out[0] if single else out


def train_transfer(src: np.ndarray, tgt: np.ndarray, val_src: np.ndarray,
                   val_tgt: np.ndarray, config: TransferConfig, seed: int = 0,
                   val_score_fn=None, log_fn=None) -> tuple[TransferParams, dict]:
    """AdamW on MSE over aligned (source, target) pairs.

    ``val_score_fn(pred_val_embeddings) -> float`` (lower is better) overrides
    the default validation MSE; training stops early once the score has not
    improved for ``config.patience`` epochs and the best checkpoint is kept.
    """
    src = np.asarray(src, dtype=np.float64)
    tgt = np.asarray(tgt, dtype=np.float64)
    val_src = np.asarray(val_src, dtype=np.float64)
    val_tgt = np.asarray(val_tgt, dtype=np.float64)
    if len(src) != len(tgt) or len(val_src) != len(val_tgt):
        raise ValueError("source/target pairs are misaligned")
    if len(src) == 0 or len(val_src) == 0:
        raise ValueError("empty split")
    if src.shape[1] != config.embed_dim or tgt.shape[1] != config.embed_dim:
        raise ValueError("embedding width does not match the config")

    net = init_mlp(config.layer_specs(), stream(seed, "transfer-init"))
    params = TransferParams(config, net)
    opt = optimizer_init("adamw", net.arrays(), lr=config.lr,
                         weight_decay=config.weight_decay)
    rng = stream(seed, "transfer-train")

    history = {"train_loss": [], "val_score": [], "best_epoch": -1,
               "stopped_epoch": -1}
    best_score = float("inf")
    best_net = copy.deepcopy(net)
    n = len(src)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        n_steps = 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            out, cache = mlp_forward(net, src[idx], mode="train")
            loss, dout = mse_loss(out, tgt[idx])
            grads, _ = mlp_backward(net, cache, dout)
            optimizer_step(opt, net.arrays(), grads.arrays())
            commit_batchnorm(net, cache)
            epoch_loss += loss
            n_steps += 1
        history["train_loss"].append(epoch_loss / n_steps)

        pred = apply_transfer(params, val_src)
        if val_score_fn is not None:
            score = float(val_score_fn(pred))
        else:
            score = float(np.mean((pred - val_tgt) ** 2))
        history["val_score"].append(score)
        if score < best_score:
            best_score = score
            history["best_epoch"] = epoch
            best_net = copy.deepcopy(net)
        if log_fn is not None:
            log_fn(epoch, history["train_loss"][-1], score)
        if epoch - history["best_epoch"] >= config.patience:
            history["stopped_epoch"] = epoch
            break
    params.net = best_net
    return params, history
