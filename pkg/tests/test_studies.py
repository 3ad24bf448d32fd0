"""Mode-connectivity sweeps, refit repeatability, timing, and text export."""
import numpy as np
import pytest

from inrkit.embedding import (
    DecoderConfig,
    EncoderConfig,
    Inr2vecModel,
    init_decoder,
    init_encoder,
)
from inrkit.fields import encode_distance_labels, sample_queries
from inrkit.fitting import FitConfig, InrArchitecture, fit_inr
from inrkit.losses import field_loss
from inrkit.mlp import mlp_forward
from inrkit.rng import stream
from inrkit.shapes import ShapeSpec, gen_shape
from inrkit.studies import (
    export_embeddings,
    hardware_descriptor,
    lmc_sweep,
    load_embedding_table,
    median_time_ms,
    repeatability_matrix,
    timing_harness,
)

ARCH = InrArchitecture(hidden_dim=8, hidden_layers=3)
FIT = FitConfig(steps=5, queries_per_step=128)


def tiny_pool(i=0, field_kind="occ"):
    spec = ShapeSpec(kind="sphere", dims=(0.3 + 0.05 * i,), seed=i)
    bundle = gen_shape(spec, voxel_res=8)
    return sample_queries(bundle, field_kind, total=600, seed=i)


def tiny_model():
    enc_cfg = EncoderConfig(in_dim=8, stage_dims=(8, 16), embed_dim=16)
    dec_cfg = DecoderConfig(embed_dim=16, freq_count=2, hidden_dim=8)
    return Inr2vecModel(encoder=init_encoder(enc_cfg, seed=0),
                        decoder=init_decoder(dec_cfg, seed=0),
                        enc_config=enc_cfg, dec_config=dec_cfg, arch=ARCH,
                        init_seed=0, field_kind="occ", loss_kind="focal",
                        max_dist=0.1)


# --- linear mode connectivity ----------------------------------------------


def direct_loss(record, pool, seed=0, n_queries=4096):
    """Endpoint loss computed outside the sweep, same fixed batch."""
    rng = stream(seed, "lmc")
    take = min(n_queries, len(pool))
    idx = (rng.choice(len(pool), size=take, replace=False)
           if take < len(pool) else np.arange(len(pool)))
    targets = encode_distance_labels(pool.targets[idx], pool.field_kind,
                                     record.max_dist)
    out, _ = mlp_forward(record.params, pool.points[idx], mode="eval")
    loss, _ = field_loss(record.loss_kind, out[:, 0], targets)
    return float(loss)


def test_lmc_endpoints_match_direct_loss_exactly():
    pool = tiny_pool()
    a = fit_inr(pool, ARCH, FIT, fit_seed=1)
    b = fit_inr(pool, ARCH, FIT, fit_seed=2)
    report = lmc_sweep(a, b, pool)
    assert report.losses[0] == direct_loss(a, pool)
    assert report.losses[-1] == direct_loss(b, pool)
    assert report.endpoint_losses == (report.losses[0], report.losses[-1])


def test_lmc_same_record_is_flat():
    pool = tiny_pool()
    a = fit_inr(pool, ARCH, FIT, fit_seed=1)
    report = lmc_sweep(a, a, pool)
    assert np.allclose(report.losses, report.losses[0], rtol=1e-12, atol=0)
    assert report.losses[0] == report.losses[-1]


def test_lmc_barrier_ratio_at_least_one():
    pool = tiny_pool()
    a = fit_inr(pool, ARCH, FIT, init_seed=0, fit_seed=1)
    b = fit_inr(pool, ARCH, FIT, init_seed=9, fit_seed=1)
    report = lmc_sweep(a, b, pool)
    assert np.isfinite(report.losses).all()
    assert report.peak == report.losses.max()
    assert report.barrier_ratio >= 1.0  # peak includes the endpoints


def test_lmc_custom_ts():
    pool = tiny_pool()
    a = fit_inr(pool, ARCH, FIT, fit_seed=1)
    report = lmc_sweep(a, a, pool, ts=np.array([0.0, 0.25, 1.0]))
    assert len(report.losses) == 3
    assert report.ts[1] == 0.25


def test_lmc_rejects_mismatches():
    pool = tiny_pool()
    a = fit_inr(pool, ARCH, FIT, fit_seed=1)
    other_arch = InrArchitecture(hidden_dim=4, hidden_layers=3)
    c = fit_inr(pool, other_arch, FIT)
    with pytest.raises(ValueError, match="architect"):
        lmc_sweep(a, c, pool)
    udf_pool = tiny_pool(field_kind="udf")
    u = fit_inr(udf_pool, ARCH, FIT)
    with pytest.raises(ValueError, match="field kind"):
        lmc_sweep(a, u, pool)
    with pytest.raises(ValueError, match="pool"):
        lmc_sweep(a, a, udf_pool)
    mse = fit_inr(pool, ARCH, FitConfig(steps=5, queries_per_step=128, loss="mse"))
    with pytest.raises(ValueError, match="objective"):
        lmc_sweep(a, mse, pool)
    with pytest.raises(ValueError, match="ts"):
        lmc_sweep(a, a, pool, ts=np.array([0.0, 0.5, 0.9]))
    with pytest.raises(ValueError, match="ts"):
        lmc_sweep(a, a, pool, ts=np.array([0.0, 0.6, 0.5, 1.0]))


# --- refit repeatability ----------------------------------------------------


def test_repeatability_matrix_structure():
    pools = [tiny_pool(i) for i in range(3)]
    model = tiny_model()
    rep = repeatability_matrix(pools, model, ARCH, FIT, fit_seeds=(1, 2))
    n = 3 * 2
    assert rep.embeddings.shape == (3, 2, 16)
    assert rep.distances.shape == (n, n)
    assert np.array_equal(np.diag(rep.distances), np.zeros(n))
    assert np.array_equal(rep.distances, rep.distances.T)
    assert rep.mean_intra > 0 and rep.mean_inter > 0
    assert rep.ratio == rep.mean_inter / rep.mean_intra


def test_repeatability_matrix_deterministic():
    pools = [tiny_pool(i) for i in range(2)]
    model = tiny_model()
    a = repeatability_matrix(pools, model, ARCH, FIT, fit_seeds=(1, 2))
    b = repeatability_matrix(pools, model, ARCH, FIT, fit_seeds=(1, 2))
    assert np.array_equal(a.distances, b.distances)
    assert np.array_equal(a.embeddings, b.embeddings)


def test_repeatability_matrix_validates():
    pools = [tiny_pool(i) for i in range(2)]
    model = tiny_model()
    with pytest.raises(ValueError, match="two shapes"):
        repeatability_matrix(pools[:1], model, ARCH, FIT)
    with pytest.raises(ValueError, match="two refits"):
        repeatability_matrix(pools, model, ARCH, FIT, fit_seeds=(1,))


# --- timing ------------------------------------------------------------------


def test_median_time_ms():
    assert median_time_ms(lambda: None, repeats=3) >= 0.0
    with pytest.raises(ValueError):
        median_time_ms(lambda: None, repeats=0)


def test_hardware_descriptor_mentions_cores():
    desc = hardware_descriptor()
    assert isinstance(desc, str) and "core" in desc


def test_timing_harness_report():
    pool = tiny_pool()
    rec_small = fit_inr(pool, ARCH, FIT, fit_seed=1)
    rec_big = fit_inr(pool, ARCH, FIT, fit_seed=2)
    model = tiny_model()
    report = timing_harness(model, {"pts2048": rec_small, "pts65536": rec_big},
                            recon_record=rec_small,
                            recon_resolutions=(8, 16, 32), repeats=3)
    assert set(report.embed_ms) == {"pts2048", "pts65536"}
    assert all(v > 0 for v in report.embed_ms.values())
    assert list(report.recon_ms) == [8, 16, 32]
    assert all(v > 0 for v in report.recon_ms.values())
    # 64x the lattice points must cost visibly more, whatever the hardware
    assert report.recon_ms[32] > report.recon_ms[8]
    assert report.hardware == hardware_descriptor()


def test_timing_harness_validates_resolutions():
    pool = tiny_pool()
    rec = fit_inr(pool, ARCH, FIT)
    with pytest.raises(ValueError, match="increasing"):
        timing_harness(tiny_model(), {}, rec, recon_resolutions=(16, 8))
    with pytest.raises(ValueError, match="increasing"):
        timing_harness(tiny_model(), {}, rec, recon_resolutions=(16,))


# --- embedding export --------------------------------------------------------


def adversarial_float32(n, dim, seed=0):
    """float32 values from random bit patterns, nan/inf filtered out."""
    rng = stream(seed, "bits")
    out = np.zeros((0,), dtype=np.float32)
    while out.size < n * dim:
        bits = rng.integers(0, 2 ** 32, size=4 * n * dim, dtype=np.uint32)
        vals = bits.view(np.float32)
        out = np.concatenate([out, vals[np.isfinite(vals)]])
    return out[:n * dim].reshape(n, dim)


def test_export_round_trip_bit_exact(tmp_path):
    vecs = adversarial_float32(20, 7)
    ids = [3, 1, 4] + list(range(100, 117))
    names = (["sphere", "box", "torus"] * 7)[:20]
    path = tmp_path / "emb.csv"
    export_embeddings(path, ids, names, vecs)
    rid, rnames, rvecs = load_embedding_table(path)
    assert rid.tolist() == ids
    assert rnames == names
    assert rvecs.dtype == np.float32
    assert rvecs.tobytes() == vecs.tobytes()


def test_export_header_names_columns(tmp_path):
    path = tmp_path / "emb.csv"
    export_embeddings(path, [1], ["box"], np.zeros((1, 3), dtype=np.float32))
    first = path.read_text().splitlines()[0]
    assert first == "id,class,e0,e1,e2"


def test_export_validates(tmp_path):
    path = tmp_path / "emb.csv"
    vec = np.zeros((2, 3), dtype=np.float32)
    with pytest.raises(ValueError, match="duplicate"):
        export_embeddings(path, [1, 1], ["a", "b"], vec)
    with pytest.raises(ValueError, match="align"):
        export_embeddings(path, [1], ["a", "b"], vec)
    with pytest.raises(ValueError, match="class names"):
        export_embeddings(path, [1, 2], ["a,b", "c"], vec)
    with pytest.raises(ValueError, match="class names"):
        export_embeddings(path, [1, 2], ["", "c"], vec)
    with pytest.raises(ValueError, match="2-d"):
        export_embeddings(path, [1], ["a"], np.zeros(3, dtype=np.float32))


def test_load_rejects_malformed(tmp_path):
    path = tmp_path / "emb.csv"
    export_embeddings(path, [1, 2], ["a", "b"], np.ones((2, 2), dtype=np.float32))
    good = path.read_text().splitlines()
    bad1 = tmp_path / "bad1.csv"
    bad1.write_text("\n".join([good[0], "1,a,0.5"]) + "\n")  # short row
    with pytest.raises(ValueError, match="width"):
        load_embedding_table(bad1)
    bad2 = tmp_path / "bad2.csv"
    bad2.write_text("\n".join(["idx,class,e0,e1"] + good[1:]) + "\n")
    with pytest.raises(ValueError, match="header"):
        load_embedding_table(bad2)
    bad3 = tmp_path / "bad3.csv"
    bad3.write_text("")
    with pytest.raises(ValueError, match="empty"):
        load_embedding_table(bad3)
