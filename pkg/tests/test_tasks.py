"""Embedding-space tasks: classification, retrieval, segmentation, transfer,
and latent generation."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inrkit.losses import softmax
from inrkit.mlp import LayerSpec, MlpParams, finite_diff_grad, init_mlp, relative_error
from inrkit.rng import stream
from inrkit.tasks import (
    ClassifierConfig,
    GanConfig,
    PartSegConfig,
    PartSegParams,
    TransferConfig,
    accuracy,
    apply_transfer,
    class_miou,
    classify,
    estitchup_augment,
    gradient_penalty,
    init_gan,
    instance_iou,
    instance_miou,
    knn_retrieve,
    map_at_k,
    sample_embeddings,
    segment_points,
    train_classifier,
    train_latent_gan,
    train_partseg,
    train_transfer,
    transfer_labels,
)
from inrkit.tasks.classify import ClassifierParams


class _FixedQRng:
    """Stub generator forcing the stitch weight."""

    def __init__(self, q):
        self.q = q

    def uniform(self):
        return self.q

    def random(self, size=None):
        return np.zeros(size)  # 0 < q for q > 0, so every element takes e1


# --- E-Stitchup -----------------------------------------------------------


def test_estitchup_q_one_returns_first():
    e1 = np.array([1.0, 2.0, 3.0])
    e2 = np.array([9.0, 9.0, 9.0])
    mixed, label = estitchup_augment(e1, np.array(1.0), e2, np.array(0.0),
                                     _FixedQRng(1.0))
    assert np.array_equal(mixed, e1)
    assert label == 1.0


def test_estitchup_q_zero_returns_second():
    class AllSecond(_FixedQRng):
        def random(self, size=None):
            return np.ones(size)  # 1 < 0 is false everywhere

    e1 = np.ones(4)
    e2 = np.zeros(4)
    mixed, label = estitchup_augment(e1, np.array(1.0), e2, np.array(0.0),
                                     AllSecond(0.0))
    assert np.array_equal(mixed, e2)
    assert label == 0.0


def test_estitchup_mix_fraction_tracks_q():
    # scalar labels 1/0 make the soft label equal q itself
    e1 = np.ones(10_000)
    e2 = np.zeros(10_000)
    mixed, q = estitchup_augment(e1, np.array(1.0), e2, np.array(0.0), seed=5)
    assert 0.0 < q < 1.0
    sigma = np.sqrt(q * (1 - q) / len(e1))
    assert abs(mixed.mean() - q) < 3 * sigma


def test_estitchup_rejects_mismatch():
    with pytest.raises(ValueError):
        estitchup_augment(np.ones(3), np.array(1.0), np.ones(4), np.array(0.0), 0)
    with pytest.raises(ValueError):
        estitchup_augment(np.ones(3), np.ones(2), np.ones(3), np.ones(3), 0)


# --- classifier -------------------------------------------------------------


def _cluster_data(n_per, dim, seed):
    rng = stream(seed, "clusters")
    a = rng.normal(2.0, 0.1, (n_per, dim))
    b = rng.normal(-2.0, 0.1, (n_per, dim))
    embs = np.concatenate([a, b])
    labels = np.array([0] * n_per + [1] * n_per)
    perm = rng.permutation(len(embs))
    return embs[perm], labels[perm]


def test_classifier_defaults():
    cfg = ClassifierConfig(embed_dim=32, num_classes=4)
    assert cfg.hidden_dims == (512, 256)
    assert cfg.epochs == 150
    assert cfg.batch_size == 256
    assert cfg.max_lr == 1e-4
    assert cfg.weight_decay == 1e-2
    specs = cfg.layer_specs()
    assert [(s.in_dim, s.out_dim) for s in specs] == [(32, 512), (512, 256), (256, 4)]
    assert specs[-1].activation == "none" and not specs[-1].batchnorm
    with pytest.raises(ValueError):
        ClassifierConfig(embed_dim=8, num_classes=1)


def test_classifier_separable_clusters_reach_full_accuracy():
    cfg = ClassifierConfig(embed_dim=8, num_classes=2, hidden_dims=(16, 8),
                           epochs=10, batch_size=16, max_lr=1e-2)
    train_e, train_l = _cluster_data(20, 8, seed=1)
    val_e, val_l = _cluster_data(10, 8, seed=2)
    params, hist = train_classifier(train_e, train_l, val_e, val_l, cfg, seed=0)
    assert max(hist["val_acc"]) == 1.0
    assert accuracy(params, val_e, val_l) == 1.0


def test_classify_uniform_logits():
    cfg = ClassifierConfig(embed_dim=4, num_classes=4, hidden_dims=(8,))
    net = init_mlp(cfg.layer_specs(), stream(0, "zeroed"))
    for i in range(len(net.weights)):
        net.weights[i][:] = 0.0
    probs = classify(ClassifierParams(cfg, net), np.ones(4))
    assert np.allclose(probs, 0.25)
    assert abs(probs.sum() - 1.0) < 1e-9


def test_classify_probabilities_normalize():
    cfg = ClassifierConfig(embed_dim=8, num_classes=3, hidden_dims=(8,))
    params = ClassifierParams(cfg, init_mlp(cfg.layer_specs(), stream(1, "p")))
    probs = classify(params, stream(2, "q").normal(size=(10, 8)))
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)
    assert (probs >= 0).all()


@settings(max_examples=25, deadline=None)
@given(shift=st.floats(-50, 50), seed=st.integers(0, 100))
def test_softmax_argmax_shift_invariant(shift, seed):
    logits = np.random.default_rng(seed).normal(size=(5, 4))
    assert np.array_equal(softmax(logits).argmax(axis=1),
                          softmax(logits + shift).argmax(axis=1))


def test_classifier_determinism_and_validation():
    cfg = ClassifierConfig(embed_dim=8, num_classes=2, hidden_dims=(8,),
                           epochs=3, batch_size=16)
    train_e, train_l = _cluster_data(16, 8, seed=3)
    val_e, val_l = _cluster_data(8, 8, seed=4)
    p1, h1 = train_classifier(train_e, train_l, val_e, val_l, cfg, seed=7)
    p2, h2 = train_classifier(train_e, train_l, val_e, val_l, cfg, seed=7)
    assert h1["train_loss"] == h2["train_loss"]
    for a, b in zip(p1.net.arrays(), p2.net.arrays()):
        assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        train_classifier(train_e[:0], train_l[:0], val_e, val_l, cfg)
    with pytest.raises(ValueError):
        train_classifier(train_e, np.full_like(train_l, 9), val_e, val_l, cfg)


# --- retrieval --------------------------------------------------------------


def test_knn_exact_match_first():
    vecs = stream(3, "db").normal(size=(10, 6))
    ids = np.arange(100, 110)
    got_ids, dists = knn_retrieve(vecs[4], ids, vecs, k=3)
    assert got_ids[0] == 104
    assert dists[0] == 0.0


def test_knn_collinear_hand_order():
    vecs = np.array([[0.0], [1.0], [3.0]])
    ids = np.array([7, 8, 9])
    got_ids, dists = knn_retrieve(np.array([0.9]), ids, vecs, k=3)
    assert list(got_ids) == [8, 7, 9]
    assert np.allclose(dists, [0.1, 0.9, 2.1])


def test_knn_ties_broken_by_id():
    vecs = np.zeros((4, 3))
    ids = np.array([30, 10, 20, 40])
    got_ids, _ = knn_retrieve(np.zeros(3), ids, vecs, k=4)
    assert list(got_ids) == [10, 20, 30, 40]


def test_knn_matches_brute_force():
    rng = stream(5, "brute")
    vecs = rng.normal(size=(1000, 32))
    ids = rng.permutation(1000)
    query = rng.normal(size=32)
    got_ids, got_d = knn_retrieve(query, ids, vecs, k=50)
    d = np.linalg.norm(vecs - query, axis=1)
    expect = sorted(range(1000), key=lambda i: (d[i], ids[i]))[:50]
    assert np.array_equal(got_ids, ids[expect])
    assert np.allclose(got_d, d[expect])


def test_knn_validation():
    with pytest.raises(ValueError):
        knn_retrieve(np.zeros(3), np.array([]), np.zeros((0, 3)), 1)
    with pytest.raises(ValueError):
        knn_retrieve(np.zeros(3), np.arange(2), np.zeros((2, 3)), 3)
    with pytest.raises(ValueError):
        knn_retrieve(np.zeros(4), np.arange(2), np.zeros((2, 3)), 1)


def test_map_at_k_extremes_and_hand_value():
    assert map_at_k(np.array([[1, 1, 1]]), np.array([1]), 3) == 1.0
    assert map_at_k(np.array([[2, 3, 4]]), np.array([1]), 3) == 0.0
    # hit, miss, hit: (1/1 + 2/3) / 2
    assert map_at_k(np.array([[1, 0, 1]]), np.array([1]), 3) == pytest.approx(5 / 6)
    with pytest.raises(ValueError):
        map_at_k(np.array([[1]]), np.array([1]), 0)
    with pytest.raises(ValueError):
        map_at_k(np.array([[1, 2]]), np.array([1]), 3)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 500), k=st.integers(1, 6))
def test_map_at_k_range_and_perfection(seed, k):
    rng = np.random.default_rng(seed)
    retrieved = rng.integers(0, 3, size=(4, 6))
    queries = rng.integers(0, 3, size=4)
    score = map_at_k(retrieved, queries, k)
    assert 0.0 <= score <= 1.0
    all_match = (retrieved[:, :k] == queries[:, None]).all()
    assert (score == 1.0) == bool(all_match)


# --- part segmentation -------------------------------------------------------


SEG_CFG = PartSegConfig(embed_dim=8, parts_per_class=(2, 3), freq_count=2,
                        hidden_dim=16, epochs=2, batch_size=64)


def test_partseg_config_ranges():
    assert SEG_CFG.num_classes == 2
    assert SEG_CFG.num_parts == 5
    assert SEG_CFG.part_range(0) == (0, 2)
    assert SEG_CFG.part_range(1) == (2, 5)
    assert SEG_CFG.decoder_config().embed_dim == 10  # embedding + one-hot
    assert SEG_CFG.decoder_config().out_dim == 5
    with pytest.raises(ValueError):
        SEG_CFG.part_range(2)
    with pytest.raises(ValueError):
        PartSegConfig(embed_dim=4, parts_per_class=())


def test_segment_points_stays_in_class_range():
    from inrkit.embedding import init_decoder

    params = PartSegParams(SEG_CFG, init_decoder(SEG_CFG.decoder_config(), 3))
    pts = stream(6, "segpts").uniform(-1, 1, (50, 3))
    emb = stream(6, "segemb").normal(size=8)
    for class_id in (0, 1):
        start, stop = SEG_CFG.part_range(class_id)
        labels = segment_points(params, emb, class_id, pts)
        assert ((labels >= start) & (labels < stop)).all()


def test_segment_points_masks_dominant_foreign_logit():
    from inrkit.embedding import init_decoder

    params = PartSegParams(SEG_CFG, init_decoder(SEG_CFG.decoder_config(), 0))
    for k in params.decoder.weights:
        params.decoder.weights[k] = np.zeros_like(params.decoder.weights[k])
    params.decoder.weights["out_b"] = np.array([100.0, 0, 0, 0, 1.0])
    labels = segment_points(params, np.zeros(8), 1, np.zeros((4, 3)))
    assert (labels == 4).all()  # part 0's huge logit is outside class 1


def test_segment_single_part_class_constant():
    cfg = PartSegConfig(embed_dim=4, parts_per_class=(1, 2), freq_count=1,
                        hidden_dim=8)
    from inrkit.embedding import init_decoder

    params = PartSegParams(cfg, init_decoder(cfg.decoder_config(), 1))
    labels = segment_points(params, np.ones(4), 0,
                            stream(7, "one").uniform(-1, 1, (20, 3)))
    assert (labels == 0).all()


def test_instance_iou_formula():
    assert instance_iou([0, 1, 1], [0, 1, 1], (0, 2)) == 1.0
    assert instance_iou([0, 0], [1, 1], (0, 2)) == 0.0
    # one part at 1/3 overlap, another perfect: labels outside the range are
    # treated as background for both parts
    pred = np.array([0, 0, 0, 1])
    gt = np.array([0, 5, 5, 1])
    assert instance_iou(pred, gt, (0, 2)) == pytest.approx((1 / 3 + 1.0) / 2)
    # parts absent from both sides count as 1
    assert instance_iou([1, 1], [1, 1], (0, 2)) == 1.0
    with pytest.raises(ValueError):
        instance_iou([0], [0, 1], (0, 2))


def test_miou_aggregates():
    cfg = PartSegConfig(embed_dim=4, parts_per_class=(2, 2))
    preds = [np.array([0, 1]), np.array([2, 2])]
    gts = [np.array([0, 1]), np.array([2, 3])]
    classes = [0, 1]
    # shape 0 perfect; shape 1: part2 IoU 1/2, part3 0 -> 0.25
    assert instance_miou(preds, gts, classes, cfg) == pytest.approx((1.0 + 0.25) / 2)
    assert class_miou(preds, gts, classes, cfg) == pytest.approx((1.0 + 0.25) / 2)
    # duplicate class-0 shapes shift instance but not class aggregation
    preds2 = preds + [np.array([0, 1])]
    gts2 = gts + [np.array([0, 1])]
    assert class_miou(preds2, gts2, [0, 1, 0], cfg) == pytest.approx((1.0 + 0.25) / 2)
    assert instance_miou(preds2, gts2, [0, 1, 0], cfg) == pytest.approx((2 + 0.25) / 3)


def test_transfer_labels_nearest_neighbor_oracle():
    rng = stream(8, "nn")
    src = rng.uniform(-1, 1, (60, 3))
    labels = rng.integers(0, 5, size=60)
    tgt = rng.uniform(-1, 1, (40, 3))
    got = transfer_labels(src, labels, tgt)
    d = np.linalg.norm(tgt[:, None, :] - src[None, :, :], axis=2)
    assert np.array_equal(got, labels[d.argmin(axis=1)])
    with pytest.raises(ValueError):
        transfer_labels(src[:0], labels[:0], tgt)


def test_train_partseg_degenerate_single_part():
    cfg = PartSegConfig(embed_dim=4, parts_per_class=(1,), freq_count=1,
                        hidden_dim=8, epochs=1, batch_size=32)
    rng = stream(9, "deg")
    embs = [rng.normal(size=4) for _ in range(2)]
    pts = [rng.uniform(-1, 1, (30, 3)) for _ in range(2)]
    labels = [np.zeros(30, dtype=int) for _ in range(2)]
    params, hist = train_partseg(embs, pts, labels, [0, 0],
                                 embs, pts, labels, [0, 0], cfg, seed=0)
    assert hist["val_miou"][-1] == 1.0


def test_train_partseg_learns_hemispheres():
    # the part label is a pure function of the query (sign of z), which the
    # positional encoding makes linearly separable
    cfg = PartSegConfig(embed_dim=4, parts_per_class=(2,), freq_count=4,
                        hidden_dim=32, epochs=30, batch_size=128, max_lr=3e-3)
    rng = stream(10, "hemi")
    embs, pts, labels = [], [], []
    for _ in range(2):
        embs.append(rng.normal(size=4))
        p = rng.uniform(-1, 1, (200, 3))
        pts.append(p)
        labels.append((p[:, 2] > 0).astype(int))
    params, hist = train_partseg(embs, pts, labels, [0, 0],
                                 embs, pts, labels, [0, 0], cfg, seed=1)
    assert max(hist["val_miou"]) > 0.9
    with pytest.raises(ValueError):
        train_partseg(embs, pts, [l + 9 for l in labels], [0, 0],
                      [], [], [], [], cfg)
    with pytest.raises(ValueError):
        train_partseg(embs, pts[:1], labels, [0, 0], [], [], [], [], cfg)


# --- latent transfer ----------------------------------------------------------


def test_transfer_config_defaults():
    cfg = TransferConfig(embed_dim=16)
    assert cfg.stages == 8
    assert cfg.lr == 1e-4 and cfg.weight_decay == 1e-4
    specs = cfg.layer_specs()
    assert len(specs) == 8
    assert all(s.in_dim == 16 and s.out_dim == 16 for s in specs)
    assert all(s.batchnorm for s in specs[:-1]) and not specs[-1].batchnorm
    with pytest.raises(ValueError):
        TransferConfig(embed_dim=16, stages=1)


def test_transfer_learns_identity():
    cfg = TransferConfig(embed_dim=8, stages=4, lr=3e-2, epochs=400,
                         batch_size=64, patience=100)
    rng = stream(11, "ident")
    src = rng.normal(size=(256, 8))
    val = rng.normal(size=(64, 8))
    params, hist = train_transfer(src, src, val, val, cfg, seed=0)
    pred = apply_transfer(params, val)
    base = float(np.mean(val ** 2))
    assert min(hist["val_score"]) < 0.05 * base
    assert np.mean((pred - val) ** 2) < 0.05 * base


def test_transfer_early_stops_on_flat_validation():
    cfg = TransferConfig(embed_dim=4, stages=2, epochs=100, batch_size=16,
                         patience=5)
    rng = stream(12, "flat")
    src = rng.normal(size=(32, 4))
    params, hist = train_transfer(src, src, src[:8], src[:8], cfg, seed=0,
                                  val_score_fn=lambda pred: 1.0)
    assert hist["best_epoch"] == 0
    assert hist["stopped_epoch"] == cfg.patience
    assert len(hist["train_loss"]) == cfg.patience + 1


def test_transfer_validation_errors():
    cfg = TransferConfig(embed_dim=4)
    ok = np.zeros((4, 4))
    with pytest.raises(ValueError):
        train_transfer(ok, ok[:3], ok, ok, cfg)
    with pytest.raises(ValueError):
        train_transfer(ok[:0], ok[:0], ok, ok, cfg)
    with pytest.raises(ValueError):
        train_transfer(np.zeros((4, 5)), np.zeros((4, 5)), ok, ok, cfg)


def test_apply_transfer_single_and_batch():
    cfg = TransferConfig(embed_dim=4, stages=2)
    from inrkit.mlp import init_mlp as _init

    params_net = _init(cfg.layer_specs(), stream(13, "net"))
    from inrkit.tasks.transfer import TransferParams

    params = TransferParams(cfg, params_net)
    batch = stream(13, "b").normal(size=(3, 4))
    out = apply_transfer(params, batch)
    np.testing.assert_allclose(apply_transfer(params, batch[0]), out[0],
                               rtol=1e-12, atol=1e-12)


# --- latent GAN ------------------------------------------------------------------


def test_gan_config_defaults():
    cfg = GanConfig(embed_dim=64)
    assert cfg.noise_dim == 128
    assert cfg.noise_std == 0.2
    assert cfg.critic_hidden == (256, 512)
    assert cfg.gp_weight == 10.0
    assert cfg.critic_steps == 5
    assert (cfg.beta1, cfg.beta2) == (0.5, 0.9)
    gen = cfg.generator_specs()
    assert [(s.in_dim, s.out_dim, s.activation) for s in gen] == [
        (128, 128, "relu"), (128, 64, "none")]
    critic = cfg.critic_specs()
    assert [(s.in_dim, s.out_dim) for s in critic] == [(64, 256), (256, 512), (512, 1)]
    assert critic[-1].activation == "none"
    with pytest.raises(ValueError):
        GanConfig(embed_dim=8, noise_std=0.0)


def test_gradient_penalty_linear_critic_closed_form():
    rng = stream(14, "lin")
    w = rng.normal(size=(1, 6))
    critic = MlpParams(specs=(LayerSpec(6, 1, "none"),), weights=[w.copy()],
                       biases=[np.zeros(1)], bn=[None])
    x_real = rng.normal(size=(5, 6))
    x_fake = rng.normal(size=(5, 6))
    penalty, grads = gradient_penalty(critic, x_real, x_fake, seed=0)
    norm = np.linalg.norm(w)
    assert abs(penalty - (norm - 1.0) ** 2) < 1e-12
    expect = 2.0 * (norm - 1.0) * w / norm
    assert np.allclose(grads.d_weights[0], expect, atol=1e-12)
    assert np.allclose(grads.d_biases[0], 0.0)


def test_gradient_penalty_unit_norm_is_zero():
    w = np.zeros((1, 4))
    w[0, 2] = 1.0
    critic = MlpParams(specs=(LayerSpec(4, 1, "none"),), weights=[w],
                       biases=[np.zeros(1)], bn=[None])
    penalty, _ = gradient_penalty(critic, np.ones((3, 4)), -np.ones((3, 4)), 1)
    assert abs(penalty) < 1e-15


def test_gradient_penalty_matches_finite_differences():
    cfg = GanConfig(embed_dim=4, critic_hidden=(6, 5))
    critic = init_mlp(cfg.critic_specs(), stream(15, "fd"))
    x_real = stream(15, "xr").normal(size=(4, 4))
    x_fake = stream(15, "xf").normal(size=(4, 4))

    def loss_fn():
        return gradient_penalty(critic, x_real, x_fake, seed=3)[0]

    _, grads = gradient_penalty(critic, x_real, x_fake, seed=3)
    numeric = finite_diff_grad(loss_fn, critic.arrays())
    for g, n in zip(grads.arrays(), numeric):
        if np.abs(g).max() < 1e-8 and np.abs(n).max() < 1e-8:
            continue
        assert relative_error(g, n) < 1e-4


def test_gradient_penalty_shape_check():
    cfg = GanConfig(embed_dim=4)
    critic = init_mlp(cfg.critic_specs(), stream(16, "s"))
    with pytest.raises(ValueError):
        gradient_penalty(critic, np.ones((3, 4)), np.ones((2, 4)), 0)


def test_sample_embeddings_pure_and_varied():
    cfg = GanConfig(embed_dim=12, batch_size=4)
    gan = init_gan(cfg, seed=2)
    a = sample_embeddings(gan, 100, seed=9)
    b = sample_embeddings(gan, 100, seed=9)
    assert np.array_equal(a, b)
    assert a.shape == (100, 12)
    assert a.var(axis=0).max() > 0.0
    assert not np.array_equal(a, sample_embeddings(gan, 100, seed=10))
    with pytest.raises(ValueError):
        sample_embeddings(gan, 0, seed=1)


def test_train_latent_gan_deterministic_and_guarded():
    cfg = GanConfig(embed_dim=6, gen_hidden=8, critic_hidden=(8, 8),
                    epochs=3, batch_size=8, critic_steps=2)
    embs = stream(17, "ge").normal(size=(16, 6))
    g1, h1 = train_latent_gan(embs, cfg, seed=4)
    g2, h2 = train_latent_gan(embs, cfg, seed=4)
    assert h1["critic_loss"] == h2["critic_loss"]
    assert h1["gen_loss"] == h2["gen_loss"]
    for a, b in zip(g1.generator.arrays(), g2.generator.arrays()):
        assert np.array_equal(a, b)
    assert len(h1["wasserstein"]) == cfg.epochs
    assert all(np.isfinite(h1["critic_loss"]))
    with pytest.raises(ValueError):
        train_latent_gan(embs[:4], cfg, seed=0)
    with pytest.raises(ValueError):
        train_latent_gan(embs[:, :3], cfg, seed=0)
