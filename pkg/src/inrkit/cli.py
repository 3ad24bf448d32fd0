"""Command-line front end: one verb per pipeline stage.

Every verb prints metrics as line-delimited ``key=value`` pairs on stdout.
Given the same ``--seed`` and inputs, each verb except ``bench`` (which
measures wall time) writes byte-identical artifacts and prints identical
metrics on rerun.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .config import SCALE_NAMES, ScaleConfig, load_scale
from .dataset import (
    PARTS_PER_CLASS,
    DatasetManifest,
    build_dataset,
    load_manifest,
    manifest_path,
    part_labels,
    save_manifest,
)
from .embedding import (
    DecoderField,
    Inr2vecModel,
    embed,
    init_decoder,
    init_encoder,
    load_embeddings,
    load_inr2vec,
    reference_cloud,
    save_embeddings,
    save_inr2vec,
    train_inr2vec,
)
from .fields import sample_queries
from .fitting import FitConfig, fit_batch, fit_inr, load_inr, save_inr
from .io3d import read_cloud, read_queries, write_cloud, write_off, write_voxels
from .metrics import chamfer_distance
from .recon import InrField, marching_cubes, sample_cloud_udf, voxelize_occ
from .shapes import ShapeSpec, gen_shape
from .studies import (
    export_embeddings,
    lmc_sweep,
    repeatability_matrix,
    timing_harness,
)
from .tasks import (
    accuracy,
    apply_transfer,
    instance_miou,
    knn_retrieve,
    load_gan,
    map_at_k,
    sample_embeddings,
    save_gan,
    segment_points,
    train_classifier,
    train_latent_gan,
    train_partseg,
    train_transfer,
)
from .rng import stream


class CliError(Exception):
    """User-facing error: bad arguments or missing inputs."""


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (np.floating,)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def emit(**pairs) -> None:
    for key, value in pairs.items():
        print(f"{key}={_fmt(value)}")


def _require_manifest(args) -> DatasetManifest:
    if args.manifest is None:
        raise CliError("this verb needs --manifest")
    return load_manifest(args.manifest)


def _parse_ids(text: str | None) -> list[int] | None:
    if text is None:
        return None
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise CliError(f"--ids expects comma-separated integers, got {text!r}") from None


def _select_entries(man: DatasetManifest, split: str, ids: list[int] | None):
    entries = man.entries if split == "all" else man.split_entries(split)
    if ids is None:
        return entries
    by_id = {e.id: e for e in entries}
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise CliError(f"ids not in the selected split: {missing}")
    return [by_id[i] for i in ids]


def _records_for(man: DatasetManifest, entries) -> list:
    records = []
    for e in entries:
        if e.files.get("inr") is None:
            raise CliError(f"entry {e.id} has no fitted INR; run fit first")
        records.append(load_inr(man.path_of(e, "inr")))
    return records


def _embedding_map(path) -> dict[int, np.ndarray]:
    ids, vecs = load_embeddings(path)
    return {int(i): v for i, v in zip(ids, vecs)}


def _split_embeddings(man: DatasetManifest, by_id: dict[int, np.ndarray],
                      split: str):
    entries = [e for e in man.split_entries(split) if e.id in by_id]
    if not entries:
        raise CliError(f"no embeddings cover the {split} split")
    embs = np.stack([by_id[e.id] for e in entries])
    labels = np.array([e.class_id for e in entries])
    return entries, embs, labels


# --- verbs -------------------------------------------------------------------


def cmd_gen_data(args, cfg: ScaleConfig) -> None:
    per_class = args.per_class if args.per_class is not None else cfg.per_class
    man = build_dataset(args.root, per_class=per_class, seed=args.seed,
                        field_kind=cfg.field_kind, classes=cfg.classes,
                        cloud_points=cfg.cloud_points, voxel_res=cfg.voxel_res,
                        pool_total=cfg.pool_total)
    emit(dataset_id=man.dataset_id, manifest=manifest_path(man),
         entries=len(man.entries),
         train=len(man.split_entries("train")),
         val=len(man.split_entries("val")),
         test=len(man.split_entries("test")))


def cmd_fit(args, cfg: ScaleConfig) -> None:
    man = _require_manifest(args)
    entries = _select_entries(man, args.split, _parse_ids(args.ids))
    todo = [e for e in entries if args.force or e.files.get("inr") is None]
    emit(selected=len(entries), skipped=len(entries) - len(todo))
    if not todo:
        emit(fitted=0)
        return
    pools = [read_queries(man.path_of(e, "queries")) for e in todo]
    records = fit_batch(pools, cfg.arch(), cfg.fit_config(man.field_kind),
                        init_seed=args.seed,
                        fit_seeds=[args.fit_seed] * len(todo),
                        shape_ids=[e.id for e in todo])
    for e, rec in zip(todo, records):
        rel = f"inrs/{e.id:04d}.inr"
        save_inr(rec, man.root / rel)
        e.files["inr"] = rel
    save_manifest(man)
    final = np.array([r.loss_trace[-1] for r in records])
    first = np.array([r.loss_trace[0] for r in records])
    emit(fitted=len(todo), mean_first_loss=float(first.mean()),
         mean_final_loss=float(final.mean()), max_final_loss=float(final.max()))


def cmd_train_inr2vec(args, cfg: ScaleConfig) -> None:
    man = _require_manifest(args)
    train_entries = [e for e in man.split_entries("train") if e.files.get("inr")]
    val_entries = [e for e in man.split_entries("val") if e.files.get("inr")]
    if not train_entries:
        raise CliError("no fitted INRs in the train split; run fit first")
    records = _records_for(man, train_entries)
    pools = [read_queries(man.path_of(e, "queries")) for e in train_entries]
    val_records = _records_for(man, val_entries)
    val_clouds = [reference_cloud(read_cloud(man.path_of(e, "cloud")),
                                  cfg.val_points, seed=args.seed)
                  for e in val_entries]
    enc_cfg = cfg.encoder_config()
    dec_cfg = cfg.decoder_config()
    model, hist = train_inr2vec(records, pools, val_records, val_clouds,
                                enc_cfg, dec_cfg, cfg.inr2vec_config(),
                                seed=args.seed)
    out = Path(args.out) if args.out else man.root / "model.i2v"
    save_inr2vec(model, out)
    # untrained twin from the same init: the ablation baseline for transfer
    init_model = Inr2vecModel(
        encoder=init_encoder(enc_cfg, args.seed),
        decoder=init_decoder(dec_cfg, args.seed),
        enc_config=enc_cfg, dec_config=dec_cfg, arch=model.arch,
        init_seed=model.init_seed, field_kind=model.field_kind,
        loss_kind=model.loss_kind, max_dist=model.max_dist,
        flatten_mode=model.flatten_mode)
    init_out = out.with_name(out.stem + "-init" + out.suffix)
    save_inr2vec(init_model, init_out)
    emit(model=out, init_model=init_out, train_inrs=len(records),
         val_inrs=len(val_records), epochs=len(hist.train_loss),
         first_train_loss=hist.train_loss[0], last_train_loss=hist.train_loss[-1],
         best_epoch=hist.best_epoch, best_val_cd=hist.best_val_cd)


def cmd_embed(args, cfg: ScaleConfig) -> None:
    man = _require_manifest(args)
    model = load_inr2vec(args.model)
    entries = [e for e in _select_entries(man, args.split, None)
               if e.files.get("inr")]
    if not entries:
        raise CliError("no fitted INRs to embed; run fit first")
    vectors = np.stack([embed(model, load_inr(man.path_of(e, "inr")))
                        for e in entries])
    out = Path(args.out) if args.out else man.root / "embeddings.emb"
    save_embeddings(out, np.array([e.id for e in entries]), vectors)
    emit(embedded=len(entries), dim=vectors.shape[1], out=out)


def cmd_reconstruct(args, cfg: ScaleConfig) -> None:
    man = _require_manifest(args)
    entry = man.entry(args.id)
    if args.source == "inr":
        field = InrField(load_inr(man.path_of(entry, "inr")))
    else:
        if args.model is None or args.embeddings is None:
            raise CliError("decoder reconstruction needs --model and --embeddings")
        model = load_inr2vec(args.model)
        by_id = _embedding_map(args.embeddings)
        if entry.id not in by_id:
            raise CliError(f"entry {entry.id} is not in {args.embeddings}")
        field = DecoderField(model.decoder, by_id[entry.id], model.field_kind,
                             model.loss_kind, model.max_dist)
    out = Path(args.out)
    emit(id=entry.id, source=args.source, field_kind=man.field_kind)
    if man.field_kind == "udf":
        cloud = sample_cloud_udf(field, cfg.sampler_config(), seed=args.seed)
        write_cloud(cloud, out)
        ref = read_cloud(man.path_of(entry, "cloud"))
        emit(out=out, points=len(cloud),
             chamfer=chamfer_distance(cloud.points, ref.points))
    elif man.field_kind == "sdf":
        mesh = marching_cubes(field, cfg.mc_config())
        write_off(mesh, out)
        emit(out=out, vertices=len(mesh.vertices), triangles=len(mesh.triangles),
             watertight=mesh.watertight)
    else:
        grid = voxelize_occ(field, cfg.voxel_res, cfg.occ_threshold)
        write_voxels(grid, out)
        emit(out=out, occupied=int(grid.occupancy.sum()))


def cmd_classify(args, cfg: ScaleConfig) -> None:
    man = _require_manifest(args)
    by_id = _embedding_map(args.embeddings)
    _, train_x, train_y = _split_embeddings(man, by_id, "train")
    _, val_x, val_y = _split_embeddings(man, by_id, "val")
    _, test_x, test_y = _split_embeddings(man, by_id, "test")
    params, hist = train_classifier(train_x, train_y, val_x, val_y,
                                    cfg.classifier_config(len(man.classes)),
                                    seed=args.seed)
    emit(classes=len(man.classes), train=len(train_y), val=len(val_y),
         test=len(test_y), best_epoch=hist["best_epoch"],
         val_acc=max(hist["val_acc"]),
         test_acc=accuracy(params, test_x, test_y))


def cmd_retrieve(args, cfg: ScaleConfig) -> None:
    man = _require_manifest(args)
    by_id = _embedding_map(args.embeddings)
    db_entries, db_x, db_y = _split_embeddings(man, by_id, "train")
    q_entries, q_x, q_y = _split_embeddings(man, by_id, "test")
    k = args.k if args.k is not None else cfg.knn_k
    db_ids = np.array([e.id for e in db_entries])
    label_of = {e.id: e.class_id for e in db_entries}
    retrieved = np.zeros((len(q_x), k), dtype=np.int64)
    for i, q in enumerate(q_x):
        ids, _ = knn_retrieve(q, db_ids, db_x, k)
        retrieved[i] = [label_of[int(j)] for j in ids]
    score = map_at_k(retrieved, q_y, k)
    emit(k=k, n_queries=len(q_x), n_database=len(db_x), map_at_k=score)


def _segmentation_examples(man: DatasetManifest, by_id, split: str,
                           cfg: ScaleConfig, seed: int):
    seg_cfg = cfg.partseg_config()
    embs, pts, labels, classes = [], [], [], []
    for e in man.split_entries(split):
        if e.id not in by_id:
            continue
        cloud = read_cloud(man.path_of(e, "cloud")).points
        take = min(cfg.seg_points, len(cloud))
        idx = stream(seed, "seg-points", e.id).choice(len(cloud), size=take,
                                                      replace=False)
        p = cloud[idx]
        start, _ = seg_cfg.part_range(e.class_id)
        embs.append(by_id[e.id])
        pts.append(p)
        labels.append(start + part_labels(e.spec, p))
        classes.append(e.class_id)
    if not embs:
        raise CliError(f"no embeddings cover the {split} split")
    return embs, pts, labels, classes


def cmd_segment(args, cfg: ScaleConfig) -> None:
    man = _require_manifest(args)
    expected = tuple(PARTS_PER_CLASS[c] for c in man.classes)
    if cfg.parts_per_class != expected:
        raise CliError(f"parts_per_class {cfg.parts_per_class} does not match "
                       f"the dataset classes (expected {expected})")
    by_id = _embedding_map(args.embeddings)
    train = _segmentation_examples(man, by_id, "train", cfg, args.seed)
    val = _segmentation_examples(man, by_id, "val", cfg, args.seed)
    test = _segmentation_examples(man, by_id, "test", cfg, args.seed)
    seg_cfg = cfg.partseg_config()
    params, hist = train_partseg(*train, *val, seg_cfg, seed=args.seed)
    preds = [segment_points(params, emb, cls, pts)
             for emb, pts, cls in zip(test[0], test[1], test[3])]
    emit(train_shapes=len(train[0]), val_shapes=len(val[0]),
         test_shapes=len(test[0]), best_epoch=hist["best_epoch"],
         val_class_miou=max(hist["val_miou"]),
         test_instance_miou=instance_miou(preds, test[2], test[3], seg_cfg))


def cmd_transfer(args, cfg: ScaleConfig) -> None:
    man = _require_manifest(args)
    src = _embedding_map(args.src)
    dst = _embedding_map(args.dst)
    common = sorted(set(src) & set(dst))
    if not common:
        raise CliError("source and destination embeddings share no ids")

    def pairs(split: str):
        ids = [e.id for e in man.split_entries(split) if e.id in src and e.id in dst]
        if not ids:
            raise CliError(f"no shared embeddings in the {split} split")
        return (np.stack([src[i] for i in ids]), np.stack([dst[i] for i in ids]))

    src_tr, dst_tr = pairs("train")
    src_va, dst_va = pairs("val")
    src_te, dst_te = pairs("test")
    params, hist = train_transfer(src_tr, dst_tr, src_va, dst_va,
                                  cfg.transfer_config(), seed=args.seed)
    pred = apply_transfer(params, src_te)
    base = float(np.mean((src_te - dst_te) ** 2))
    emit(pairs=len(common), best_epoch=hist["best_epoch"],
         stopped_epoch=hist["stopped_epoch"],
         best_val_score=min(hist["val_score"]),
         test_mse=float(np.mean((pred - dst_te) ** 2)),
         identity_test_mse=base)


def cmd_gan_train(args, cfg: ScaleConfig) -> None:
    man = _require_manifest(args)
    by_id = _embedding_map(args.embeddings)
    entries, train_x, _ = _split_embeddings(man, by_id, "train")
    if args.class_name is not None:
        if args.class_name not in man.classes:
            raise CliError(f"unknown class {args.class_name!r}")
        keep = [i for i, e in enumerate(entries)
                if e.class_name == args.class_name]
        if not keep:
            raise CliError(f"no train embeddings for class {args.class_name!r}")
        train_x = train_x[keep]
    gan, hist = train_latent_gan(train_x, cfg.gan_config(), seed=args.seed)
    out = Path(args.out) if args.out else man.root / "gan.lgn"
    save_gan(gan, out)
    tail = min(10, len(hist["wasserstein"]))
    emit(out=out, train_embeddings=len(train_x), epochs=len(hist["critic_loss"]),
         final_critic_loss=hist["critic_loss"][-1],
         final_gen_loss=hist["gen_loss"][-1],
         wasserstein_tail_mean=float(np.mean(hist["wasserstein"][-tail:])))


def cmd_gan_sample(args, cfg: ScaleConfig) -> None:
    gan = load_gan(args.gan)
    vectors = sample_embeddings(gan, args.n, seed=args.seed)
    out = Path(args.out)
    save_embeddings(out, np.arange(args.n), np.asarray(vectors, dtype=np.float32))
    norms = np.linalg.norm(vectors, axis=1)
    emit(out=out, samples=args.n, dim=vectors.shape[1],
         mean_norm=float(norms.mean()), std_norm=float(norms.std()))


def cmd_lmc(args, cfg: ScaleConfig) -> None:
    man = _require_manifest(args)
    entry = man.entry(args.id)
    if entry.files.get("inr") is None:
        raise CliError(f"entry {entry.id} has no fitted INR; run fit first")
    rec_a = load_inr(man.path_of(entry, "inr"))
    pool = read_queries(man.path_of(entry, "queries"))
    # refit with the stored objective so endpoint losses are comparable
    fit_cfg = dataclasses.replace(cfg.fit_config(man.field_kind),
                                  loss=rec_a.loss_kind, max_dist=rec_a.max_dist)
    rec_same = fit_inr(pool, rec_a.arch, fit_cfg, init_seed=rec_a.init_seed,
                       fit_seed=args.seed + 1, shape_id=entry.id)
    rec_diff = fit_inr(pool, rec_a.arch, fit_cfg, init_seed=rec_a.init_seed + 7919,
                       fit_seed=args.seed + 1, shape_id=entry.id)
    same = lmc_sweep(rec_a, rec_same, pool, n_queries=cfg.lmc_points,
                     seed=args.seed)
    diff = lmc_sweep(rec_a, rec_diff, pool, n_queries=cfg.lmc_points,
                     seed=args.seed)
    emit(id=entry.id, points=len(same.ts))
    for t, ls, ld in zip(same.ts, same.losses, diff.losses):
        print(f"loss_same_t{t:g}={_fmt(float(ls))}")
        print(f"loss_diff_t{t:g}={_fmt(float(ld))}")
    emit(same_init_barrier=same.barrier_ratio, diff_init_barrier=diff.barrier_ratio)


def cmd_repeatability(args, cfg: ScaleConfig) -> None:
    man = _require_manifest(args)
    model = load_inr2vec(args.model)
    n_shapes = args.shapes if args.shapes is not None else cfg.repeat_shapes
    refits = args.refits if args.refits is not None else cfg.repeat_refits
    entries = man.split_entries("train")[:n_shapes]
    if len(entries) < n_shapes:
        raise CliError(f"train split has only {len(entries)} shapes")
    pools = [read_queries(man.path_of(e, "queries")) for e in entries]
    fit_cfg = dataclasses.replace(cfg.fit_config(man.field_kind),
                                  loss=model.loss_kind, max_dist=model.max_dist)
    rep = repeatability_matrix(pools, model, model.arch, fit_cfg,
                               fit_seeds=tuple(range(1, refits + 1)),
                               init_seed=model.init_seed)
    emit(shapes=n_shapes, refits=refits, mean_intra=rep.mean_intra,
         mean_inter=rep.mean_inter, ratio=rep.ratio)


def cmd_bench(args, cfg: ScaleConfig) -> None:
    model = load_inr2vec(args.model)
    quick = FitConfig(steps=10, queries_per_step=cfg.fit_queries, lr=cfg.fit_lr,
                      loss=model.loss_kind, max_dist=model.max_dist)
    records = {}
    for label, n_points in (("pts2048", 2048), ("pts65536", 65536)):
        spec = ShapeSpec(kind="sphere", dims=(0.4,), seed=9001)
        bundle = gen_shape(spec, cloud_points=n_points, voxel_res=cfg.voxel_res)
        pool = sample_queries(bundle, model.field_kind, total=4096, seed=args.seed)
        records[label] = fit_inr(pool, model.arch, quick,
                                 init_seed=model.init_seed, shape_id=9001)
    report = timing_harness(model, records, recon_record=records["pts2048"],
                            recon_resolutions=(16, 32, 64),
                            repeats=cfg.bench_repeats)
    emit(hardware=report.hardware, repeats=report.repeats)
    for label, ms in report.embed_ms.items():
        print(f"embed_ms_{label}={_fmt(ms)}")
    emit(embed_ratio=report.embed_ms["pts65536"] / report.embed_ms["pts2048"])
    for res, ms in report.recon_ms.items():
        print(f"recon_ms_{res}={_fmt(ms)}")
    times = list(report.recon_ms.values())
    emit(recon_monotone=all(a < b for a, b in zip(times, times[1:])))


def cmd_export(args, cfg: ScaleConfig) -> None:
    man = _require_manifest(args)
    ids, vectors = load_embeddings(args.embeddings)
    classes = [man.entry(int(i)).class_name for i in ids]
    export_embeddings(args.out, ids, classes, np.asarray(vectors, np.float32))
    emit(out=args.out, rows=len(ids), dim=vectors.shape[1])


# --- parser ------------------------------------------------------------------


_HANDLERS = {
    "gen-data": cmd_gen_data,
    "fit": cmd_fit,
    "train-inr2vec": cmd_train_inr2vec,
    "embed": cmd_embed,
    "reconstruct": cmd_reconstruct,
    "classify": cmd_classify,
    "retrieve": cmd_retrieve,
    "segment": cmd_segment,
    "transfer": cmd_transfer,
    "gan-train": cmd_gan_train,
    "gan-sample": cmd_gan_sample,
    "lmc": cmd_lmc,
    "repeatability": cmd_repeatability,
    "bench": cmd_bench,
    "export": cmd_export,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0,
                        help="master seed for every random stream")
    common.add_argument("--scale", choices=SCALE_NAMES, default="desk",
                        help="preset sizing all models and budgets")
    common.add_argument("--config", type=Path, default=None, metavar="FILE",
                        help="key=value file overriding preset fields")
    common.add_argument("--manifest", type=Path, default=None, metavar="FILE",
                        help="dataset manifest path")

    parser = argparse.ArgumentParser(
        prog="inrkit",
        description="Fit implicit shape fields, embed their weights, and run "
                    "downstream shape tasks.")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("gen-data", parents=[common],
                       help="generate a procedural shape dataset")
    p.add_argument("--root", type=Path, required=True)
    p.add_argument("--per-class", type=int, default=None)

    p = sub.add_parser("fit", parents=[common], help="fit INRs for entries")
    p.add_argument("--split", choices=("all", "train", "val", "test"),
                   default="all")
    p.add_argument("--ids", default=None, help="comma-separated entry ids")
    p.add_argument("--fit-seed", type=int, default=0)
    p.add_argument("--force", action="store_true",
                   help="refit entries that already have INR files")

    p = sub.add_parser("train-inr2vec", parents=[common],
                       help="train the weight-space embedding model")
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("embed", parents=[common],
                       help="embed fitted INRs with a trained model")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--split", choices=("all", "train", "val", "test"),
                   default="all")
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("reconstruct", parents=[common],
                       help="rebuild the discrete shape from a field")
    p.add_argument("--id", type=int, required=True)
    p.add_argument("--source", choices=("inr", "decoder"), default="inr")
    p.add_argument("--model", type=Path, default=None)
    p.add_argument("--embeddings", type=Path, default=None)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("classify", parents=[common],
                       help="train and score the embedding classifier")
    p.add_argument("--embeddings", type=Path, required=True)

    p = sub.add_parser("retrieve", parents=[common],
                       help="k-NN retrieval quality over embeddings")
    p.add_argument("--embeddings", type=Path, required=True)
    p.add_argument("--k", type=int, default=None)

    p = sub.add_parser("segment", parents=[common],
                       help="train and score embedding-conditioned part labels")
    p.add_argument("--embeddings", type=Path, required=True)

    p = sub.add_parser("transfer", parents=[common],
                       help="learn a map between two embedding spaces")
    p.add_argument("--src", type=Path, required=True)
    p.add_argument("--dst", type=Path, required=True)

    p = sub.add_parser("gan-train", parents=[common],
                       help="train the latent generator on train embeddings")
    p.add_argument("--embeddings", type=Path, required=True)
    p.add_argument("--class-name", default=None,
                   help="restrict training to one shape class")
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("gan-sample", parents=[common],
                       help="sample embeddings from a trained generator")
    p.add_argument("--gan", type=Path, required=True)
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("lmc", parents=[common],
                       help="loss along straight weight-space paths")
    p.add_argument("--id", type=int, required=True)

    p = sub.add_parser("repeatability", parents=[common],
                       help="embedding spread across refits of the same shapes")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--shapes", type=int, default=None)
    p.add_argument("--refits", type=int, default=None)

    p = sub.add_parser("bench", parents=[common],
                       help="wall-time medians for embed and reconstruction")
    p.add_argument("--model", type=Path, required=True)

    p = sub.add_parser("export", parents=[common],
                       help="write embeddings as delimited text")
    p.add_argument("--embeddings", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_scale(args.scale, args.config)
        _HANDLERS[args.verb](args, cfg)
    except (CliError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
