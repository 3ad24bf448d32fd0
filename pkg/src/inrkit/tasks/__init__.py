"""Embedding-space tasks: classification, retrieval, part segmentation,
latent transfer, and latent generation."""
from .classify import (
    ClassifierConfig,
    ClassifierParams,
    accuracy,
    classify,
    estitchup_augment,
    train_classifier,
)
from .gan import (
    GanConfig,
    GanParams,
    gradient_penalty,
    init_gan,
    load_gan,
    sample_embeddings,
    save_gan,
    train_latent_gan,
)
from .partseg import (
    PartSegConfig,
    PartSegParams,
    class_miou,
    instance_iou,
    instance_miou,
    segment_points,
    train_partseg,
    transfer_labels,
)
from .retrieval import knn_retrieve, map_at_k
from .transfer import (
    TransferConfig,
    TransferParams,
    apply_transfer,
    train_transfer,
)

__all__ = [
    "ClassifierConfig", "ClassifierParams", "accuracy", "classify",
    "estitchup_augment", "train_classifier",
    "GanConfig", "GanParams", "gradient_penalty", "init_gan", "load_gan",
    "sample_embeddings", "save_gan", "train_latent_gan",
    "PartSegConfig", "PartSegParams", "class_miou", "instance_iou",
    "instance_miou", "segment_points", "train_partseg", "transfer_labels",
    "knn_retrieve", "map_at_k",
    "TransferConfig", "TransferParams", "apply_transfer", "train_transfer",
]
