#!/usr/bin/env python3
"""Decode latent-GAN samples and measure fidelity to the training set.

Usage:
    python scripts/study_gan_decode.py --root out/desk [--class-name sphere]
        [--n 16] [--seed 0]

Runs against a finished pipeline directory (gen-data .. gan-train).  Samples
embeddings from the trained generator, decodes each through the embedding
model's implicit decoder, and compares every decoded cloud against the
stored training clouds of the GAN's class: a sample is faithful when its
chamfer distance to the nearest training shape stays within a few times the
median chamfer distance *between* training shapes.
"""
import argparse
import itertools
from pathlib import Path

import numpy as np

from inrkit.config import load_scale
from inrkit.dataset import load_manifest
from inrkit.embedding import DecoderField, load_inr2vec
from inrkit.io3d import read_cloud
from inrkit.metrics import chamfer_distance
from inrkit.recon import sample_cloud_udf
from inrkit.tasks import load_gan, sample_embeddings


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--root", type=Path, required=True)
    parser.add_argument("--class-name", default=None)
    parser.add_argument("--n", type=int, default=16)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--scale", default="desk")
    parser.add_argument("--config", default=None)
    args = parser.parse_args()

    cfg = load_scale(args.scale, args.config)
    man = load_manifest(args.root / "manifest.json")
    model = load_inr2vec(args.root / "model.i2v")
    gan = load_gan(args.root / "gan.lgn")
    class_name = args.class_name or man.classes[0]
    if class_name not in man.classes:
        raise SystemExit(f"unknown class {class_name!r}")

    train = [e for e in man.split_entries("train") if e.class_name == class_name]
    clouds = [read_cloud(man.path_of(e, "cloud")).points for e in train]
    print(f"class={class_name} train_shapes={len(clouds)} samples={args.n}")

    inter = [chamfer_distance(a, b) for a, b in itertools.combinations(clouds, 2)]
    median_inter = float(np.median(inter))
    print(f"median_inter_training_cd={median_inter!r}")

    vectors = sample_embeddings(gan, args.n, args.seed)
    factors = []
    for i, e in enumerate(vectors):
        field = DecoderField(model.decoder, e, model.field_kind,
                             model.loss_kind, model.max_dist)
        decoded = sample_cloud_udf(field, cfg.sampler_config(), seed=i).points
        nearest = min(chamfer_distance(decoded, c) for c in clouds)
        factors.append(nearest / median_inter)
        print(f"sample_{i:02d}_nearest_cd={nearest!r} factor={factors[-1]:.3f}")

    factors = np.array(factors)
    print(f"median_factor={float(np.median(factors))!r}")
    print(f"max_factor={float(factors.max())!r}")
    print(f"within_3x={int((factors <= 3.0).sum())}/{args.n}")


if __name__ == "__main__":
    main()
