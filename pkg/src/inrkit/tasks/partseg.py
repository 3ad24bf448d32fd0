"""Point-level part segmentation driven by shape embeddings.

A query-conditioned decoder (same topology as the reconstruction decoder,
but conditioned on embedding + one-hot class and emitting K part logits)
is trained with cross entropy on the original clouds' labeled points.
Predictions are restricted to the contiguous part-label range of the
shape's class, mirroring how part taxonomies nest inside categories.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ..embedding import DecoderConfig, DecoderParams, decoder_backward, decoder_forward
from ..losses import softmax_cross_entropy
from ..optim import LrSchedule, optimizer_init, optimizer_step, schedule_lr
from ..rng import stream


@dataclass(frozen=True)
class PartSegConfig:
    embed_dim: int
    parts_per_class: tuple[int, ...]  # contiguous label blocks, one per class
    freq_count: int = 10
    hidden_dim: int = 512
    epochs: int = 250
    batch_size: int = 256
    max_lr: float = 1e-4
    weight_decay: float = 1e-2

    def __post_init__(self):
        if self.embed_dim < 1 or not self.parts_per_class:
            raise ValueError("need a positive embedding width and >= 1 class")
        if any(p < 1 for p in self.parts_per_class):
            raise ValueError("every class needs at least one part")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")

    @property
    def num_classes(self) -> int:
        return len(self.parts_per_class)

    @property
    def num_parts(self) -> int:
        return sum(self.parts_per_class)

    def part_range(self, class_id: int) -> tuple[int, int]:
        if not 0 <= class_id < self.num_classes:
            raise ValueError(f"unknown class {class_id}")
        start = sum(self.parts_per_class[:class_id])
        return start, start + self.parts_per_class[class_id]

    def decoder_config(self) -> DecoderConfig:
        # conditioning rides along with the embedding ahead of the encoding
        return DecoderConfig(embed_dim=self.embed_dim + self.num_classes,
                             freq_count=self.freq_count,
                             hidden_dim=self.hidden_dim,
                             out_dim=self.num_parts)


@dataclass
class PartSegParams:
    config: PartSegConfig
    decoder: DecoderParams


def _one_hot(class_ids: np.ndarray, num_classes: int) -> np.ndarray:
    class_ids = np.asarray(class_ids, dtype=int)
    out = np.zeros((len(class_ids), num_classes))
    out[np.arange(len(class_ids)), class_ids] = 1.0
    return out


def _condition(config: PartSegConfig, embedding: np.ndarray,
               class_id: int) -> np.ndarray:
    emb = np.asarray(embedding, dtype=np.float64)
    if emb.shape != (config.embed_dim,):
        raise ValueError("embedding length does not match the config")
    return np.concatenate([emb, _one_hot([class_id], config.num_classes)[0]])


def segment_points(params: PartSegParams, embedding: np.ndarray, class_id: int,
                   points: np.ndarray) -> np.ndarray:
    """Part label per point, argmax restricted to the class's label range."""
    cfg = params.config
    start, stop = cfg.part_range(class_id)
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    cond = _condition(cfg, embedding, class_id)
    rows = np.broadcast_to(cond, (len(points), len(cond)))
    logits, _ = decoder_forward(params.decoder, rows, points)
    return start + logits[:, start:stop].argmax(axis=1)


def instance_iou(pred: np.ndarray, gt: np.ndarray,
                 part_range: tuple[int, int]) -> float:
    """Mean IoU over the class's parts; parts absent from both sides count 1
    (the usual convention, and what makes pred == gt score exactly 1)."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape or pred.size == 0:
        raise ValueError("need equal-length non-empty label arrays")
    ious = []
    for part in range(part_range[0], part_range[1]):
        p = pred == part
        g = gt == part
        union = (p | g).sum()
        ious.append(1.0 if union == 0 else (p & g).sum() / union)
    return float(np.mean(ious))


def instance_miou(preds: list[np.ndarray], gts: list[np.ndarray],
                  class_ids: list[int], config: PartSegConfig) -> float:
    """Mean of per-shape IoUs across the whole set."""
    if not preds or len(preds) != len(gts) or len(preds) != len(class_ids):
        raise ValueError("need aligned non-empty prediction/label/class lists")
    scores = [instance_iou(p, g, config.part_range(c))
              for p, g, c in zip(preds, gts, class_ids)]
    return float(np.mean(scores))


def class_miou(preds: list[np.ndarray], gts: list[np.ndarray],
               class_ids: list[int], config: PartSegConfig) -> float:
    """Per-class mean of instance IoUs, then the mean over classes present."""
    if not preds or len(preds) != len(gts) or len(preds) != len(class_ids):
        raise ValueError("need aligned non-empty prediction/label/class lists")
    per_class: dict[int, list[float]] = {}
    for p, g, c in zip(preds, gts, class_ids):
        per_class.setdefault(c, []).append(instance_iou(p, g, config.part_range(c)))
    return float(np.mean([np.mean(v) for v in per_class.values()]))


def transfer_labels(source_points: np.ndarray, source_labels: np.ndarray,
                    target_points: np.ndarray) -> np.ndarray:
    """Label each target point with its nearest source point's label."""
    source_points = np.asarray(source_points, dtype=np.float64)
    source_labels = np.asarray(source_labels)
    if len(source_points) != len(source_labels) or len(source_points) == 0:
        raise ValueError("need one label per source point")
    _, idx = cKDTree(source_points).query(np.atleast_2d(target_points))
    return source_labels[idx]


def train_partseg(embeddings: list[np.ndarray], point_sets: list[np.ndarray],
                  point_labels: list[np.ndarray], class_ids: list[int],
                  val_embeddings: list[np.ndarray], val_point_sets: list[np.ndarray],
                  val_point_labels: list[np.ndarray], val_class_ids: list[int],
                  config: PartSegConfig, seed: int = 0,
                  log_fn=None) -> tuple[PartSegParams, dict]:
    """Cross entropy on all part logits over every labeled point; the
    checkpoint with the best validation class mIoU wins."""
    if not (len(embeddings) == len(point_sets) == len(point_labels) == len(class_ids)):
        raise ValueError("misaligned training lists")
    if len(embeddings) == 0:
        raise ValueError("empty training set")
    for labels in point_labels + val_point_labels:
        labels = np.asarray(labels)
        if ((labels < 0) | (labels >= config.num_parts)).any():
            raise ValueError("part label out of range")

    conds = np.stack([_condition(config, e, c)
                      for e, c in zip(embeddings, class_ids)])
    shape_idx = np.concatenate([np.full(len(p), i)
                                for i, p in enumerate(point_sets)])
    pts = np.concatenate([np.asarray(p, dtype=np.float64) for p in point_sets])
    labels = np.concatenate([np.asarray(l, dtype=int) for l in point_labels])

    from ..embedding import init_decoder

    dec = init_decoder(config.decoder_config(), seed)
    params = PartSegParams(config, dec)
    n = len(pts)
    steps_per_epoch = (n + config.batch_size - 1) // config.batch_size
    sched = LrSchedule(kind="one_cycle", max_lr=config.max_lr,
                       total_steps=config.epochs * steps_per_epoch)
    opt = optimizer_init("adamw", dec.arrays(), lr=config.max_lr,
                         weight_decay=config.weight_decay)
    rng = stream(seed, "partseg-train")

    history = {"train_loss": [], "val_miou": [], "best_epoch": -1}
    best_miou = -1.0
    best_dec = dec.copy()
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            rows = conds[shape_idx[idx]]
            logits, cache = decoder_forward(dec, rows, pts[idx])
            loss, dlogits = softmax_cross_entropy(logits, labels[idx])
            grads, _ = decoder_backward(dec, cache, dlogits)
            optimizer_step(opt, dec.arrays(), grads, lr=schedule_lr(sched, step))
            epoch_loss += loss
            step += 1
        history["train_loss"].append(epoch_loss / steps_per_epoch)

        if val_embeddings:
            preds = [segment_points(params, e, c, p)
                     for e, c, p in zip(val_embeddings, val_class_ids, val_point_sets)]
            miou = class_miou(preds, val_point_labels, val_class_ids, config)
        else:
            miou = float("nan")
        history["val_miou"].append(miou)
        if val_embeddings and miou > best_miou:
            best_miou = miou
            history["best_epoch"] = epoch
            best_dec = dec.copy()
        if log_fn is not None:
            log_fn(epoch, history["train_loss"][-1], miou)

    params.decoder = best_dec if history["best_epoch"] >= 0 else dec
    return params, history
