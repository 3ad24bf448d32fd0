"""End-to-end command-line pipeline: every verb, then a byte-identical rerun."""
import contextlib
import hashlib
import io
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from inrkit import cli
from inrkit.embedding import load_embeddings
from inrkit.studies import load_embedding_table

CFG = """
classes = ("sphere", "box")
per_class = 7
cloud_points = 128
voxel_res = 8
pool_total = 800
hidden_dim = 16
hidden_layers = 3
fit_steps = 10
fit_queries = 256
fit_parallel = 4
encoder_stages = (16, 32)
embed_dim = 32
decoder_hidden = 16
i2v_epochs = 2
i2v_batch = 4
i2v_queries = 128
val_points = 64
val_resolution = 10
recon_points = 128
udf_iterations = 2
mc_resolution = 16
clf_epochs = 5
clf_batch = 16
knn_k = 3
parts_per_class = (2, 2)
seg_hidden = 16
seg_epochs = 2
seg_batch = 64
seg_points = 32
transfer_stages = 2
transfer_epochs = 4
transfer_patience = 3
gan_epochs = 3
gan_batch = 8
lmc_points = 256
repeat_shapes = 2
repeat_refits = 2
bench_repeats = 1
"""


def invoke(*argv: str) -> tuple[int, str, str]:
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        rv = cli.main(list(argv))
    return rv, out.getvalue(), err.getvalue()


def run_ok(*argv: str) -> str:
    rv, out, err = invoke(*argv)
    assert rv == 0, f"{argv} failed: {err or out}"
    return out


def parse_metrics(out: str) -> dict[str, str]:
    pairs = {}
    for line in out.strip().splitlines():
        key, _, value = line.partition("=")
        pairs[key] = value
    return pairs


def hash_tree(root: Path) -> dict[str, str]:
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


def run_pipeline(root: Path, cfg: str) -> tuple[dict[str, str], list[str]]:
    """Every deterministic verb once, in dependency order."""
    root.mkdir(parents=True, exist_ok=True)
    man = str(root / "manifest.json")
    base = ("--config", cfg, "--seed", "3")
    transcript = [
        run_ok("gen-data", "--root", str(root), *base),
        run_ok("fit", "--manifest", man, *base),
        run_ok("train-inr2vec", "--manifest", man, *base),
        run_ok("embed", "--manifest", man, "--model", str(root / "model.i2v"),
               *base),
        run_ok("embed", "--manifest", man,
               "--model", str(root / "model-init.i2v"),
               "--out", str(root / "embeddings-init.emb"), *base),
        run_ok("reconstruct", "--manifest", man, "--id", "0",
               "--out", str(root / "recon0.pts"), *base),
        run_ok("reconstruct", "--manifest", man, "--id", "0",
               "--source", "decoder", "--model", str(root / "model.i2v"),
               "--embeddings", str(root / "embeddings.emb"),
               "--out", str(root / "recon0-dec.pts"), *base),
        run_ok("classify", "--manifest", man,
               "--embeddings", str(root / "embeddings.emb"), *base),
        run_ok("retrieve", "--manifest", man,
               "--embeddings", str(root / "embeddings.emb"), *base),
        run_ok("segment", "--manifest", man,
               "--embeddings", str(root / "embeddings.emb"), *base),
        run_ok("transfer", "--manifest", man,
               "--src", str(root / "embeddings-init.emb"),
               "--dst", str(root / "embeddings.emb"), *base),
        run_ok("gan-train", "--manifest", man,
               "--embeddings", str(root / "embeddings.emb"), *base),
        run_ok("gan-sample", "--gan", str(root / "gan.lgn"), "--n", "6",
               "--out", str(root / "gan-samples.emb"), *base),
        run_ok("lmc", "--manifest", man, "--id", "0", *base),
        run_ok("repeatability", "--manifest", man,
               "--model", str(root / "model.i2v"), *base),
        run_ok("export", "--manifest", man,
               "--embeddings", str(root / "embeddings.emb"),
               "--out", str(root / "export.csv"), *base),
    ]
    return hash_tree(root), transcript


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    cfg = base / "tiny.cfg"
    cfg.write_text(CFG)
    root = base / "run"
    hashes, transcript = run_pipeline(root, str(cfg))
    return root, str(cfg), hashes, transcript


def test_pipeline_metrics_parse(pipeline):
    _, _, _, transcript = pipeline
    gen = parse_metrics(transcript[0])
    assert gen["entries"] == "14" and gen["train"] == "10"
    fit = parse_metrics(transcript[1])
    assert fit["fitted"] == "14" and fit["skipped"] == "0"
    assert float(fit["mean_final_loss"]) < float(fit["mean_first_loss"])
    train = parse_metrics(transcript[2])
    assert train["train_inrs"] == "10" and train["epochs"] == "2"
    assert np.isfinite(float(train["best_val_cd"]))
    clf = parse_metrics(transcript[7])
    assert 0.0 <= float(clf["test_acc"]) <= 1.0
    ret = parse_metrics(transcript[8])
    assert ret["k"] == "3" and 0.0 <= float(ret["map_at_k"]) <= 1.0
    seg = parse_metrics(transcript[9])
    assert 0.0 <= float(seg["test_instance_miou"]) <= 1.0
    rep = parse_metrics(transcript[14])
    assert float(rep["mean_inter"]) > 0.0


def test_pipeline_artifacts_exist(pipeline):
    root, _, hashes, _ = pipeline
    expected = ["manifest.json", "model.i2v", "model-init.i2v",
                "embeddings.emb", "embeddings-init.emb", "recon0.pts",
                "recon0-dec.pts", "gan.lgn", "gan-samples.emb", "export.csv"]
    for name in expected:
        assert name in hashes
    assert len([k for k in hashes if k.startswith("inrs/")]) == 14


def test_lmc_output_shape(pipeline):
    _, _, _, transcript = pipeline
    lmc = parse_metrics(transcript[13])
    assert lmc["points"] == "11"
    assert float(lmc["loss_same_t0"]) == float(lmc["loss_diff_t0"])
    assert float(lmc["same_init_barrier"]) >= 1.0
    assert float(lmc["diff_init_barrier"]) >= 1.0


def test_fit_skips_existing(pipeline):
    root, cfg, _, _ = pipeline
    out = parse_metrics(run_ok("fit", "--manifest", str(root / "manifest.json"),
                               "--config", cfg, "--seed", "3"))
    assert out["skipped"] == "14" and out["fitted"] == "0"


def test_force_refit_is_byte_identical(pipeline):
    root, cfg, hashes, _ = pipeline
    inr = root / "inrs" / "0000.inr"
    before = inr.read_bytes()
    out = parse_metrics(run_ok("fit", "--manifest", str(root / "manifest.json"),
                               "--config", cfg, "--seed", "3",
                               "--ids", "0", "--force"))
    assert out["fitted"] == "1"
    assert inr.read_bytes() == before


def test_gan_sample_deterministic(pipeline):
    root, cfg, _, _ = pipeline
    out = root / "gan-samples-again.emb"
    run_ok("gan-sample", "--gan", str(root / "gan.lgn"), "--n", "6",
           "--out", str(out), "--config", cfg, "--seed", "3")
    assert out.read_bytes() == (root / "gan-samples.emb").read_bytes()
    out.unlink()


def test_export_matches_embeddings(pipeline):
    root, _, _, _ = pipeline
    ids, vectors = load_embeddings(root / "embeddings.emb")
    tids, classes, tvecs = load_embedding_table(root / "export.csv")
    assert np.array_equal(tids, ids)
    assert np.array_equal(tvecs, vectors.astype(np.float32))
    assert set(classes) == {"sphere", "box"}


def test_bench_reports_timings(pipeline):
    root, cfg, _, _ = pipeline
    out = parse_metrics(run_ok("bench", "--model", str(root / "model.i2v"),
                               "--config", cfg, "--seed", "3"))
    assert "cores" in out["hardware"]
    assert float(out["embed_ms_pts2048"]) > 0.0
    assert float(out["embed_ms_pts65536"]) > 0.0
    for res in (16, 32, 64):
        assert float(out[f"recon_ms_{res}"]) > 0.0


def test_error_exits(pipeline, tmp_path):
    root, cfg, _, _ = pipeline
    man = str(root / "manifest.json")
    cases = [
        ("fit", "--config", cfg),  # no manifest
        ("fit", "--manifest", man, "--config", cfg, "--ids", "0,x"),
        ("fit", "--manifest", man, "--config", cfg, "--ids", "999"),
        ("reconstruct", "--manifest", man, "--id", "0", "--source", "decoder",
         "--out", str(tmp_path / "r.pts"), "--config", cfg),
        ("classify", "--manifest", man, "--config", cfg,
         "--embeddings", str(tmp_path / "missing.emb")),
        # desk parts table does not match a two-class dataset
        ("segment", "--manifest", man,
         "--embeddings", str(root / "embeddings.emb")),
        ("gen-data", "--root", str(tmp_path / "d"),
         "--config", str(tmp_path / "no-such.cfg")),
    ]
    for argv in cases:
        rv, _, err = invoke(*argv)
        assert rv == 2, f"{argv} should fail"
        assert err.startswith("error:")


def test_unknown_verb_rejected():
    with pytest.raises(SystemExit):
        cli.main(["frobnicate"])


def test_module_and_script_entry_points():
    rv = subprocess.run([sys.executable, "-m", "inrkit", "--help"],
                        capture_output=True, text=True)
    assert rv.returncode == 0 and "gen-data" in rv.stdout


@pytest.mark.slow
def test_rerun_is_byte_identical(pipeline):
    root, cfg, first_hashes, first_transcript = pipeline
    shutil.rmtree(root)
    second_hashes, second_transcript = run_pipeline(root, cfg)
    assert second_hashes == first_hashes
    assert second_transcript == first_transcript
