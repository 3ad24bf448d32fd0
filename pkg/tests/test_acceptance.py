"""Acceptance gate: ten end-to-end checks, one test per criterion.

Criteria 1-6 are self-contained oracle and constant checks.  Criteria 7-10
share one full desk-scale pipeline run (dataset, fits, embedding training,
every downstream verb) driven through the command line exactly as a user
would run it; criterion 10 reruns the whole pipeline and compares bytes.
Regression bounds live in acceptance_bounds.json, frozen by
scripts/calibrate_bounds.py from the first verified run.
"""
import contextlib
import hashlib
import io
import json
import shutil
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from inrkit import cli
from inrkit.config import scale_config
from inrkit.dataset import load_manifest
from inrkit.embedding import (
    DecoderConfig,
    decoder_backward,
    decoder_forward,
    flatten_inr,
    init_decoder,
    interpolate_embeddings,
    load_embeddings,
    param_count,
)
from inrkit.fitting import InrArchitecture, shared_init
from inrkit.losses import field_loss, mse_loss
from inrkit.mlp import (
    LayerSpec,
    finite_diff_grad,
    init_mlp,
    mlp_backward,
    mlp_forward,
    relative_error,
)
from inrkit.recon import McConfig, marching_cubes, project_points_udf
from inrkit.rng import stream
from inrkit.shapes import ShapeSpec, analytic_field
from inrkit.tasks import (
    PartSegConfig,
    PartSegParams,
    gradient_penalty,
    instance_miou,
    knn_retrieve,
    map_at_k,
    segment_points,
)

TESTS_DIR = Path(__file__).resolve().parent
sys.path.insert(0, str(TESTS_DIR.parent / "scripts"))
from calibrate_bounds import measure_sphere_fit_cd  # noqa: E402

BOUNDS = json.loads((TESTS_DIR / "acceptance_bounds.json").read_text())


# --- pipeline harness ----------------------------------------------------------


def invoke_ok(*argv: str) -> str:
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        rv = cli.main(list(argv))
    assert rv == 0, f"{argv} failed: {err.getvalue() or out.getvalue()}"
    return out.getvalue()


def parse_metrics(out: str) -> dict[str, str]:
    pairs = {}
    for line in out.strip().splitlines():
        key, _, value = line.partition("=")
        pairs[key] = value
    return pairs


def hash_tree(root: Path) -> dict[str, str]:
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


def run_desk_pipeline(root: Path) -> dict:
    root.mkdir(parents=True, exist_ok=True)
    man = str(root / "manifest.json")
    base = ("--scale", "desk", "--seed", "0")
    with_man = ("--manifest", man) + base
    transcript: list[str] = []
    metrics: dict[str, dict] = {}

    def step(name: str, *argv: str) -> dict[str, str]:
        out = invoke_ok(*argv)
        transcript.append(out)
        metrics[name] = parse_metrics(out)
        return metrics[name]

    t0 = time.perf_counter()
    step("gen", "gen-data", "--root", str(root), *base)
    step("fit", "fit", *with_man)
    step("train", "train-inr2vec", *with_man)
    core_seconds = time.perf_counter() - t0

    step("embed", "embed", "--model", str(root / "model.i2v"), *with_man)
    step("embed_init", "embed", "--model", str(root / "model-init.i2v"),
         "--out", str(root / "embeddings-init.emb"), *with_man)

    manifest = load_manifest(man)
    recon_dir = root / "recon"
    recon_dir.mkdir(exist_ok=True)
    recon_cd: dict[str, dict[int, float]] = {"inr": {}, "dec": {}}
    for entry in manifest.split_entries("val"):
        for source in ("inr", "dec"):
            argv = ["reconstruct", "--id", str(entry.id),
                    "--out", str(recon_dir / f"{entry.id:04d}-{source}.pts"),
                    *with_man]
            if source == "dec":
                argv[3:3] = ["--source", "decoder",
                             "--model", str(root / "model.i2v"),
                             "--embeddings", str(root / "embeddings.emb")]
            got = step(f"recon_{source}_{entry.id}", *argv)
            recon_cd[source][entry.id] = float(got["chamfer"])

    emb = ("--embeddings", str(root / "embeddings.emb"))
    step("classify", "classify", *emb, *with_man)
    step("retrieve", "retrieve", *emb, *with_man)
    step("segment", "segment", *emb, *with_man)
    step("transfer", "transfer", "--src", str(root / "embeddings-init.emb"),
         "--dst", str(root / "embeddings.emb"), *with_man)
    step("gan", "gan-train", *emb, "--class-name", manifest.classes[0],
         *with_man)
    step("gan_sample", "gan-sample", "--gan", str(root / "gan.lgn"),
         "--n", "16", "--out", str(root / "gan-samples.emb"), *base)
    first_train_id = manifest.split_entries("train")[0].id
    step("lmc", "lmc", "--id", str(first_train_id), *with_man)
    step("repeat", "repeatability", "--model", str(root / "model.i2v"),
         *with_man)
    step("export", "export", *emb, "--out", str(root / "embeddings.csv"),
         *with_man)

    return {"metrics": metrics, "recon_cd": recon_cd,
            "transcript": transcript, "hashes": hash_tree(root),
            "core_seconds": core_seconds}


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance") / "desk"
    return root, run_desk_pipeline(root)


# --- criterion 1: analytic gradients against finite differences -----------------


def _net_for_check(specs, seed):
    # walk seeds until no relu pre-activation sits inside the FD step of zero
    for s in range(seed, seed + 50):
        rng = np.random.default_rng(s)
        params = init_mlp(specs, rng, scheme="he")
        for i, spec in enumerate(specs):
            if spec.activation == "sine":
                params.weights[i] /= spec.omega
        x = rng.normal(size=(8, specs[0].in_dim))
        _, cache = mlp_forward(params, x, mode="train")
        margin = min((np.abs(lc.a).min() for lc, spec in zip(cache.layers, specs)
                      if spec.activation == "relu"), default=1.0)
        if margin > 1e-3:
            return params, x, rng
    raise AssertionError("no clean draw found")


def _check_losses_through(specs, seed):
    params, x, rng = _net_for_check(specs, seed)
    target = rng.uniform(0.05, 0.95, size=len(x))
    for kind in ("mse", "bce", "focal"):
        def closure():
            y, _ = mlp_forward(params, x, mode="train")
            return field_loss(kind, y[:, 0], target)[0]

        y, cache = mlp_forward(params, x, mode="train")
        _, dpred = field_loss(kind, y[:, 0], target)
        grads, _ = mlp_backward(params, cache, dpred[:, None])
        fd = finite_diff_grad(closure, params.arrays(), eps=1e-5)
        for a, b in zip(grads.arrays(), fd):
            if np.abs(a).max() < 1e-8 and np.abs(b).max() < 1e-8:
                continue
            assert relative_error(a, b) < 1e-4, f"{kind} grads disagree"


def test_01_gradients_match_finite_differences():
    start = time.perf_counter()
    # sine net at the full 4 hidden layers x 64 units checked size
    _check_losses_through(
        (LayerSpec(3, 64, "sine", omega=30.0), LayerSpec(64, 64, "sine", omega=30.0),
         LayerSpec(64, 64, "sine", omega=30.0), LayerSpec(64, 64, "sine", omega=30.0),
         LayerSpec(64, 1, "none")), seed=11)
    _check_losses_through(
        (LayerSpec(3, 32, "relu", batchnorm=True),
         LayerSpec(32, 64, "relu", batchnorm=True), LayerSpec(64, 1, "none")),
        seed=13)
    _check_losses_through(
        (LayerSpec(3, 16, "sigmoid"), LayerSpec(16, 1, "none")), seed=17)

    # decoder path: skip concatenation and positional encoding
    rng = np.random.default_rng(7)
    dec = init_decoder(DecoderConfig(embed_dim=8, freq_count=2, hidden_dim=16),
                       seed=7)
    rows = rng.normal(size=(6, 8))
    queries = rng.uniform(-1.0, 1.0, size=(6, 3))
    target = rng.uniform(0.05, 0.95, size=6)

    def dec_closure():
        raw, _ = decoder_forward(dec, rows, queries)
        return mse_loss(raw[:, 0], target)[0]

    raw, cache = decoder_forward(dec, rows, queries)
    _, dpred = mse_loss(raw[:, 0], target)
    grads, _ = decoder_backward(dec, cache, dpred[:, None])
    fd = finite_diff_grad(dec_closure, dec.arrays(), eps=1e-5)
    for a, b in zip(grads, fd):
        assert relative_error(a, b) < 1e-4, "decoder grads disagree"

    assert time.perf_counter() - start < 30.0


# --- criterion 2: flattened weight-matrix shapes ---------------------------------


def test_02_flattening_shapes_exact():
    big = shared_init(InrArchitecture(hidden_dim=512, hidden_layers=4), 0)
    assert flatten_inr(big).shape == (1539, 512)
    small = shared_init(InrArchitecture(hidden_dim=64, hidden_layers=4), 0)
    assert flatten_inr(small).shape == (195, 64)


# --- criterion 3: architecture constants at full scale ---------------------------


def test_03_full_scale_architecture_constants():
    cfg = scale_config("paper")
    assert cfg.decoder_config().in_dim == 1087  # 1024 + 63
    assert cfg.encoder_config().stage_dims == (512, 512, 1024, 1024)
    assert cfg.classifier_config(4).hidden_dims == (512, 256)
    gan = cfg.gan_config()
    assert (gan.noise_dim, gan.noise_std) == (128, 0.2)
    assert gan.critic_hidden == (256, 512)
    assert gan.critic_specs()[-1].out_dim == 1
    sampler = cfg.sampler_config()
    assert sampler.distance_threshold == 0.05
    assert sampler.iterations == 5
    assert cfg.occ_threshold == 0.4


# --- criterion 4: parameter counts ------------------------------------------------


def test_04_parameter_counts_within_ten_percent():
    cfg = scale_config("paper")
    inr, encoder, naive = param_count(cfg.arch(), cfg.encoder_config())
    for value, target in ((inr, 800_000), (encoder, 3_000_000),
                          (naive, 800_000_000)):
        assert abs(value - target) / target <= 0.10, (value, target)


# --- criterion 5: reconstruction oracles on exact fields -------------------------


def test_05_reconstruction_oracles():
    start = time.perf_counter()
    sphere = ShapeSpec(kind="sphere", dims=(0.5,), seed=0)
    udf = analytic_field(sphere).udf()

    rng = stream(0, "proj-oracle")
    dirs = rng.normal(size=(512, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = np.concatenate([rng.uniform(0.15, 0.45, 256),
                            rng.uniform(0.55, 0.95, 256)])
    pts = dirs * radii[:, None]
    projected, stuck = project_points_udf(udf, pts, iterations=1)
    assert not stuck.any()
    assert np.abs(np.linalg.norm(projected, axis=1) - 0.5).max() <= 1e-9

    mesh = marching_cubes(analytic_field(sphere), McConfig(resolution=32))
    assert len(mesh.vertices) > 0
    cell_diagonal = np.sqrt(3.0) * (2.0 / 32)
    err = np.abs(np.linalg.norm(mesh.vertices, axis=1) - 0.5)
    assert err.max() <= cell_diagonal

    assert time.perf_counter() - start < 60.0


# --- criterion 6: fit quality against the recorded bound --------------------------


def test_06_sphere_fit_quality_below_recorded_bound():
    cd, elapsed = measure_sphere_fit_cd()
    assert cd <= BOUNDS["sphere_fit_cd"]["bound"], cd
    assert elapsed < 120.0


# --- criterion 7: embedding training end to end ----------------------------------


@pytest.mark.slow
def test_07_embedding_training_end_to_end(desk_run):
    root, run = desk_run
    assert run["core_seconds"] < 7200.0
    inr_cds = np.array(list(run["recon_cd"]["inr"].values()))
    dec_cds = np.array(list(run["recon_cd"]["dec"].values()))
    assert len(inr_cds) == len(dec_cds) > 0
    ratio = dec_cds.mean() / inr_cds.mean()
    assert ratio <= 2.0, (dec_cds.mean(), inr_cds.mean())

    ids, vectors = load_embeddings(root / "embeddings.emb")
    e1, e2 = vectors[0], vectors[1]
    assert np.array_equal(interpolate_embeddings(e1, e2, 0.0), e1)
    assert np.array_equal(interpolate_embeddings(e1, e2, 1.0), e2)


# --- criterion 8: refit repeatability and weight-space barriers -------------------


@pytest.mark.slow
def test_08_repeatability_and_mode_connectivity(desk_run):
    _, run = desk_run
    repeat = run["metrics"]["repeat"]
    assert (int(repeat["shapes"]), int(repeat["refits"])) == (4, 3)
    assert float(repeat["ratio"]) > 1.0

    lmc = run["metrics"]["lmc"]
    assert float(lmc["same_init_barrier"]) <= 2.0
    assert float(lmc["diff_init_barrier"]) >= 5.0


# --- criterion 9: downstream task properties --------------------------------------


@pytest.mark.slow
def test_09_downstream_task_properties(desk_run):
    _, run = desk_run
    assert float(run["metrics"]["classify"]["test_acc"]) >= 0.90

    # retrieval equals brute force on 1K random vectors
    rng = stream(0, "knn-oracle")
    vectors = rng.normal(size=(1000, 16))
    ids = rng.permutation(1000)
    for q in rng.normal(size=(50, 16)):
        got_ids, got_d = knn_retrieve(q, ids, vectors, k=10)
        d = np.linalg.norm(vectors - q, axis=1)
        order = np.lexsort((ids, d))[:10]
        assert np.array_equal(got_ids, ids[order])
        assert np.allclose(got_d, d[order], rtol=0.0, atol=1e-12)

    retrieved = np.array([[1, 0, 1], [0, 0, 1]])
    assert abs(map_at_k(retrieved, np.array([1, 1]), k=3) - 7.0 / 12.0) <= 1e-12

    seg_cfg = PartSegConfig(embed_dim=4, parts_per_class=(2, 2))
    preds = [np.array([0, 0, 1, 1]), np.array([2, 3, 2])]
    gts = [np.array([0, 1, 1, 1]), np.array([2, 3, 2])]
    got = instance_miou(preds, gts, [0, 1], seg_cfg)
    assert abs(got - 19.0 / 24.0) <= 1e-12

    # an untrained conditioned decoder still never leaves the class label range
    model = PartSegParams(seg_cfg, init_decoder(seg_cfg.decoder_config(), 3))
    pts = stream(3, "seg-range").uniform(-1.0, 1.0, size=(64, 3))
    emb = stream(4, "seg-range").normal(size=4)
    for class_id in range(seg_cfg.num_classes):
        labels = segment_points(model, emb, class_id, pts)
        start, stop = seg_cfg.part_range(class_id)
        assert labels.min() >= start and labels.max() < stop

    critic = init_mlp([LayerSpec(8, 1, "none")], stream(5, "gp-oracle"))
    x_real = stream(6, "gp-oracle").normal(size=(32, 8))
    x_fake = stream(7, "gp-oracle").normal(size=(32, 8))
    penalty, _ = gradient_penalty(critic, x_real, x_fake, seed=9)
    expected = (np.linalg.norm(critic.weights[0]) - 1.0) ** 2
    assert abs(penalty - expected) <= 1e-12


# --- criterion 10: byte-identical reruns ------------------------------------------


@pytest.mark.slow
def test_10_pipeline_rerun_is_byte_identical(desk_run):
    root, run = desk_run
    shutil.rmtree(root)
    again = run_desk_pipeline(root)
    assert again["hashes"] == run["hashes"]
    assert again["transcript"] == run["transcript"]
