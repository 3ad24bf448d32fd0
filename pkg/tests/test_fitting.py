"""Shared init law, fit loop determinism, batching, and the .inr format."""
import numpy as np
import pytest

from inrkit.fields import sample_queries
from inrkit.fitting import (
    FitBatchError,
    FitConfig,
    FitDivergenceError,
    InitRegistry,
    InrArchitecture,
    default_fit_loss,
    fit_batch,
    fit_inr,
    load_inr,
    save_inr,
    shared_init,
    siren_init,
)
from inrkit.shapes import ShapeSpec, gen_shape

TINY = InrArchitecture(hidden_dim=16, hidden_layers=4)
FAST = FitConfig(steps=30, queries_per_step=512)


@pytest.fixture(scope="module")
def sphere_pool():
    bundle = gen_shape(ShapeSpec(kind="sphere", dims=(0.5,), seed=1))
    return sample_queries(bundle, "udf", total=2048, seed=2)


def test_architecture_invariants():
    with pytest.raises(ValueError):
        InrArchitecture(hidden_dim=0)
    with pytest.raises(ValueError):
        InrArchitecture(hidden_layers=1)
    arch = InrArchitecture(hidden_dim=64, hidden_layers=4)
    specs = arch.layer_specs()
    assert len(specs) == 5
    assert [s.activation for s in specs] == ["sine"] * 4 + ["none"]
    assert arch.n_hidden_maps == 3


def test_shared_init_deterministic():
    a = siren_init(TINY, seed=7)
    b = siren_init(TINY, seed=7)
    c = siren_init(TINY, seed=8)
    for wa, wb in zip(a.arrays(), b.arrays()):
        assert np.array_equal(wa, wb)
    assert any(not np.array_equal(x, y) for x, y in zip(a.arrays(), c.arrays()))


def test_siren_init_bounds():
    arch = InrArchitecture(hidden_dim=64, hidden_layers=4, omega=30.0)
    p = siren_init(arch, seed=3)
    assert np.abs(p.weights[0]).max() <= 1.0 / 3
    hidden_bound = np.sqrt(6.0 / 64) / 30.0
    for w in p.weights[1:-1]:
        assert np.abs(w).max() <= hidden_bound
    assert np.abs(p.weights[-1]).max() <= hidden_bound


def test_registry_returns_copies():
    reg = InitRegistry()
    a = reg.get(TINY, 1)
    a.weights[0][...] = 0.0
    b = reg.get(TINY, 1)
    assert np.abs(b.weights[0]).max() > 0.0


def test_fit_config_validation():
    with pytest.raises(ValueError):
        FitConfig(steps=0)
    with pytest.raises(ValueError):
        FitConfig(focal_alpha=1.5)
    with pytest.raises(ValueError):
        FitConfig(loss="hinge")
    assert FitConfig().parallel == 16
    assert FitConfig().steps == 500
    assert FitConfig().queries_per_step == 10_000


def test_default_fit_loss_per_kind():
    assert default_fit_loss("udf") == "bce"
    assert default_fit_loss("sdf") == "bce"
    assert default_fit_loss("occ") == "focal"


def test_fit_reduces_loss_and_is_deterministic(sphere_pool):
    rec1 = fit_inr(sphere_pool, TINY, FAST, init_seed=1, fit_seed=2, shape_id=3)
    rec2 = fit_inr(sphere_pool, TINY, FAST, init_seed=1, fit_seed=2, shape_id=3)
    assert rec1.loss_trace[-1] < rec1.loss_trace[0]
    for a, b in zip(rec1.params.arrays(), rec2.params.arrays()):
        assert np.array_equal(a, b)


def test_fit_seed_changes_result(sphere_pool):
    rec1 = fit_inr(sphere_pool, TINY, FAST, fit_seed=2)
    rec2 = fit_inr(sphere_pool, TINY, FAST, fit_seed=3)
    assert any(not np.array_equal(a, b)
               for a, b in zip(rec1.params.arrays(), rec2.params.arrays()))


def test_fit_starts_from_shared_init(sphere_pool):
    init = shared_init(TINY, 0)
    rec = fit_inr(sphere_pool, TINY, FAST)
    # final weights moved away from the shared start
    assert any(not np.array_equal(a, b)
               for a, b in zip(init.arrays(), rec.params.arrays()))


def test_fit_divergence_reports_step(sphere_pool):
    bad = FitConfig(steps=10, queries_per_step=256, lr=1e308, loss="mse")
    with pytest.raises(FitDivergenceError) as err:
        fit_inr(sphere_pool, TINY, bad)
    assert err.value.step >= 1


def test_fit_batch_matches_sequential(sphere_pool):
    pools = [sphere_pool] * 3
    seeds = [1, 2, 3]
    seq = [fit_inr(sphere_pool, TINY, FAST, fit_seed=s, shape_id=i)
           for i, s in enumerate(seeds)]
    par = fit_batch(pools, TINY, FAST, fit_seeds=seeds, shape_ids=[0, 1, 2])
    for a, b in zip(seq, par):
        for wa, wb in zip(a.params.arrays(), b.params.arrays()):
            assert np.array_equal(wa, wb)


def test_fit_batch_of_one_equals_fit_inr(sphere_pool):
    one = fit_batch([sphere_pool], TINY, FAST, fit_seeds=[5], shape_ids=[9])
    direct = fit_inr(sphere_pool, TINY, FAST, fit_seed=5, shape_id=9)
    for a, b in zip(one[0].params.arrays(), direct.params.arrays()):
        assert np.array_equal(a, b)


def test_fit_batch_propagates_failures_without_aborting(sphere_pool):
    bad = FitConfig(steps=5, queries_per_step=128, lr=1e308, loss="mse")
    good = FitConfig(steps=5, queries_per_step=128)
    # different configs per shape are not part of the API; emulate one bad fit
    # by batching against a config that diverges and checking siblings section
    with pytest.raises(FitBatchError) as err:
        fit_batch([sphere_pool, sphere_pool], TINY, bad, fit_seeds=[1, 2],
                  shape_ids=[10, 11])
    assert set(err.value.errors) == {10, 11}
    recs = fit_batch([sphere_pool, sphere_pool], TINY, good, fit_seeds=[1, 2])
    assert all(r is not None for r in recs)


def test_inr_round_trip(tmp_path, sphere_pool):
    rec = fit_inr(sphere_pool, TINY, FAST, init_seed=4, fit_seed=5, shape_id=42)
    path = tmp_path / "shape.inr"
    save_inr(rec, path)
    back = load_inr(path)
    assert back.arch == rec.arch
    assert back.field_kind == "udf"
    assert back.init_seed == 4
    assert back.shape_id == 42
    assert back.loss_kind == rec.loss_kind
    assert back.max_dist == float(np.float32(rec.max_dist))
    for a, b in zip(rec.params.arrays(), back.params.arrays()):
        assert np.array_equal(a.astype(np.float32).astype(np.float64), b)


def test_inr_bad_magic(tmp_path):
    path = tmp_path / "bad.inr"
    path.write_bytes(b"XXXX" + b"\x00" * 64)
    with pytest.raises(ValueError):
        load_inr(path)
