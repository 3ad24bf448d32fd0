#!/usr/bin/env python3
"""Run every pipeline stage in order on a fresh dataset.

Usage:
    python scripts/run_pipeline.py --root out/desk [--scale desk] [--seed 0]
        [--config FILE] [--bench]

Produces a dataset, fitted INRs, the trained embedding model, embeddings for
every entry, sample reconstructions, all downstream task scores, the weight
space studies, and a text export, all under --root.  Rerunning with the same
seed into a fresh directory reproduces every artifact byte for byte.
"""
import argparse
import sys
from pathlib import Path

from inrkit.cli import main as inrkit_main
from inrkit.dataset import load_manifest


def step(*argv: str) -> None:
    print(f"\n$ inrkit {' '.join(argv)}")
    rc = inrkit_main(list(argv))
    if rc != 0:
        sys.exit(rc)


def run(root: Path, scale: str, seed: int, config: str | None,
        bench: bool) -> None:
    base = ["--scale", scale, "--seed", str(seed)]
    if config:
        base += ["--config", config]
    man = str(root / "manifest.json")
    with_man = ["--manifest", man, *base]

    step("gen-data", "--root", str(root), *base)
    step("fit", *with_man)
    step("train-inr2vec", *with_man)
    step("embed", "--model", str(root / "model.i2v"), *with_man)
    step("embed", "--model", str(root / "model-init.i2v"),
         "--out", str(root / "embeddings-init.emb"), *with_man)

    entries = load_manifest(man).split_entries("val")
    recon_dir = root / "recon"
    recon_dir.mkdir(exist_ok=True)
    show = entries[0]
    step("reconstruct", "--id", str(show.id),
         "--out", str(recon_dir / f"{show.id:04d}-inr.pts"), *with_man)
    step("reconstruct", "--id", str(show.id), "--source", "decoder",
         "--model", str(root / "model.i2v"),
         "--embeddings", str(root / "embeddings.emb"),
         "--out", str(recon_dir / f"{show.id:04d}-dec.pts"), *with_man)

    emb = ["--embeddings", str(root / "embeddings.emb")]
    step("classify", *emb, *with_man)
    step("retrieve", *emb, *with_man)
    step("segment", *emb, *with_man)
    step("transfer", "--src", str(root / "embeddings-init.emb"),
         "--dst", str(root / "embeddings.emb"), *with_man)

    first_class = load_manifest(man).classes[0]
    step("gan-train", *emb, "--class-name", first_class, *with_man)
    step("gan-sample", "--gan", str(root / "gan.lgn"), "--n", "16",
         "--out", str(root / "gan-samples.emb"), *base)

    step("lmc", "--id", str(load_manifest(man).split_entries("train")[0].id),
         *with_man)
    step("repeatability", "--model", str(root / "model.i2v"), *with_man)
    step("export", *emb, "--out", str(root / "embeddings.csv"), *with_man)
    if bench:
        step("bench", "--model", str(root / "model.i2v"), *base)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--root", type=Path, required=True)
    parser.add_argument("--scale", default="desk", choices=("desk", "paper"))
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--config", default=None)
    parser.add_argument("--bench", action="store_true",
                        help="also run the timing harness (not deterministic)")
    args = parser.parse_args()
    args.root.mkdir(parents=True, exist_ok=True)
    run(args.root, args.scale, args.seed, args.config, args.bench)


if __name__ == "__main__":
    main()
