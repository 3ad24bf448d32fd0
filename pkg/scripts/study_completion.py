#!/usr/bin/env python3
"""Latent-space shape completion: map half-sphere embeddings to full ones.

Usage:
    python scripts/study_completion.py [--shapes 48] [--seed 0] [--scale desk]

Builds random spheres, fits one INR on each full surface cloud and one on
the upper half only (same shared init), trains a small weight-space
embedding model on the union, then learns a latent transfer from half
embeddings to full embeddings.  On held-out shapes it reports the chamfer
distance to the full surface of (a) the decoded input half embedding,
(b) the decoded transferred embedding, and (c) the decoded true full
embedding; transfer counts as working when (b) improves on (a) for every
held-out shape.
"""
import argparse
import dataclasses
import time

import numpy as np

from inrkit.config import load_scale
from inrkit.embedding import DecoderField, embed, reference_cloud, train_inr2vec
from inrkit.fields import sample_queries
from inrkit.fitting import fit_batch
from inrkit.metrics import chamfer_distance
from inrkit.recon import sample_cloud_udf
from inrkit.rng import stream
from inrkit.shapes import PointCloud, ShapeSpec, gen_shape
from inrkit.tasks import apply_transfer, train_transfer


def make_pairs(n: int, seed: int, cfg):
    """Per shape: the full bundle and a twin whose cloud keeps only z >= center."""
    rng = stream(seed, "completion-specs")
    pairs = []
    for i in range(n):
        radius = float(rng.uniform(0.25, 0.45))
        center = rng.uniform(-1.0, 1.0, size=3) * (0.9 - radius)
        spec = ShapeSpec(kind="sphere", dims=(radius,),
                         center=tuple(float(c) for c in center),
                         seed=1000 + i)
        full = gen_shape(spec, cfg.cloud_points, cfg.voxel_res)
        keep = full.cloud.points[:, 2] >= spec.center[2]
        half = dataclasses.replace(
            full, cloud=PointCloud(points=full.cloud.points[keep]))
        pairs.append((full, half))
    return pairs


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--shapes", type=int, default=48)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--scale", default="desk")
    parser.add_argument("--config", default=None)
    args = parser.parse_args()

    cfg = load_scale(args.scale, args.config)
    n = args.shapes
    n_val = max(2, n // 6)
    n_train = n - n_val
    started = time.perf_counter()

    pairs = make_pairs(n, args.seed, cfg)
    fulls = [p[0] for p in pairs]
    halves = [p[1] for p in pairs]
    pools_full = [sample_queries(b, "udf", seed=args.seed, total=cfg.pool_total)
                  for b in fulls]
    pools_half = [sample_queries(b, "udf", seed=args.seed, total=cfg.pool_total)
                  for b in halves]
    print(f"shapes={n} train={n_train} val={n_val}")

    fit_cfg = cfg.fit_config("udf")
    recs_full = fit_batch(pools_full, cfg.arch(), fit_cfg, init_seed=args.seed,
                          fit_seeds=[args.seed] * n, shape_ids=list(range(n)))
    recs_half = fit_batch(pools_half, cfg.arch(), fit_cfg, init_seed=args.seed,
                          fit_seeds=[args.seed] * n,
                          shape_ids=[n + i for i in range(n)])
    print(f"fitted={2 * n} elapsed={time.perf_counter() - started:.1f}s")

    # one encoder for both spaces, trained on the union
    train_recs = recs_full[:n_train] + recs_half[:n_train]
    train_pools = pools_full[:n_train] + pools_half[:n_train]
    val_recs = recs_full[n_train:] + recs_half[n_train:]
    val_clouds = [reference_cloud(b.cloud, cfg.val_points, seed=args.seed)
                  for b in fulls[n_train:] + halves[n_train:]]
    model, hist = train_inr2vec(train_recs, train_pools, val_recs, val_clouds,
                                cfg.encoder_config(), cfg.decoder_config(),
                                cfg.inr2vec_config(), seed=args.seed)
    print(f"i2v_epochs={len(hist.train_loss)} best_val_cd={hist.best_val_cd!r}")

    emb_full = np.stack([embed(model, r) for r in recs_full])
    emb_half = np.stack([embed(model, r) for r in recs_half])
    params, thist = train_transfer(emb_half[:n_train], emb_full[:n_train],
                                   emb_half[n_train:], emb_full[n_train:],
                                   cfg.transfer_config(), seed=args.seed)
    print(f"transfer_best_epoch={thist['best_epoch']} "
          f"best_val_mse={min(thist['val_score'])!r}")

    def decode(e: np.ndarray, sample_seed: int) -> np.ndarray:
        field = DecoderField(model.decoder, e, model.field_kind,
                             model.loss_kind, model.max_dist)
        return sample_cloud_udf(field, cfg.sampler_config(),
                                seed=sample_seed).points

    cd_in, cd_tr, cd_ceiling = [], [], []
    for j in range(n_train, n):
        ref = reference_cloud(fulls[j].cloud, cfg.val_points, seed=args.seed)
        cd_in.append(chamfer_distance(decode(emb_half[j], 3 * j), ref))
        cd_tr.append(chamfer_distance(
            decode(apply_transfer(params, emb_half[j]), 3 * j + 1), ref))
        cd_ceiling.append(chamfer_distance(decode(emb_full[j], 3 * j + 2), ref))

    cd_in, cd_tr, cd_ceiling = map(np.array, (cd_in, cd_tr, cd_ceiling))
    print(f"mean_cd_input={cd_in.mean()!r}")
    print(f"mean_cd_transferred={cd_tr.mean()!r}")
    print(f"mean_cd_true_embedding={cd_ceiling.mean()!r}")
    print(f"improved_shapes={int((cd_tr < cd_in).sum())}/{n_val}")
    print(f"improvement_holds={'true' if bool((cd_tr < cd_in).all()) else 'false'}")
    print(f"total_seconds={time.perf_counter() - started:.1f}")


if __name__ == "__main__":
    main()
