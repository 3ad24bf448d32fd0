"""Toolkit for fitting implicit shape networks, embedding their weights, and
running shape tasks (classification, retrieval, segmentation, transfer,
generation) directly on the embeddings."""

__version__ = "0.1.0"
