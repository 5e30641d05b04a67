import numpy as np
import pytest

from modarray.channel import PropagationParams, compact_svd
from modarray.config import ResolvedConfig
from modarray.features import (
    DatasetSpec,
    build_dataset,
    build_features,
    load_or_build_dataset,
    make_sample,
    sample_geometries,
)
from modarray.geometry import ArraySpec, UeGeometry

CFG = ResolvedConfig()
ARRAY = CFG.array_spec()
PROP = CFG.propagation()


def test_empty_request_gives_empty_list():
    spec = DatasetSpec(n_train=0, n_val=0, seed=0)
    assert sample_geometries(spec, 0) == []


def test_uniform_range_mean():
    spec = DatasetSpec(n_train=0, n_val=0, seed=42)
    geoms = sample_geometries(spec, 20_000)
    r = np.array([g.range_m for g in geoms])
    phi = np.array([g.azimuth_rad for g in geoms])
    assert r.mean() == pytest.approx(105.0, abs=2.0)
    assert phi.mean() == pytest.approx(np.pi / 4, abs=0.02)
    assert r.min() >= 10 and r.max() <= 200
    assert phi.min() >= 0 and phi.max() <= np.pi / 2


def test_identical_seeds_identical_datasets():
    spec = DatasetSpec(n_train=0, n_val=0, seed=7)
    a = sample_geometries(spec, 50)
    b = sample_geometries(spec, 50)
    assert all(x == y for x, y in zip(a, b))


def test_per_sample_seeding_is_order_independent():
    spec = DatasetSpec(n_train=0, n_val=0, seed=7)
    full = sample_geometries(spec, 20)
    prefix = sample_geometries(spec, 5)
    assert full[:5] == prefix


def test_disk_sampling_in_quadrant_annulus():
    spec = DatasetSpec(n_train=0, n_val=0, seed=3, sampling="disk")
    geoms = sample_geometries(spec, 500)
    for g in geoms:
        assert 10 <= g.range_m <= 200
        assert 0 <= g.azimuth_rad <= np.pi / 2


def test_feature_vector_length_and_layout():
    geom = UeGeometry(range_m=80.0, azimuth_rad=0.3)
    sample = make_sample(geom, ARRAY, PROP, alpha=0.6)
    assert sample.features.shape == (4 + 2 + 2 * 4 * 36,)
    svd = compact_svd(sample.full_channel)
    assert np.allclose(sample.features[:4], np.log1p(svd.singular_values))
    assert sample.features[4] == pytest.approx(80.0 / 200.0)
    assert sample.features[5] == pytest.approx(0.3)
    vflat = svd.right.flatten(order="F")
    assert np.allclose(sample.features[6 : 6 + 144], vflat.real)
    assert np.allclose(sample.features[6 + 144 :], vflat.imag)


def test_feature_singular_value_mapping():
    class FakeSvd:
        singular_values = np.array([np.e - 1, 0.0, 0.0, 0.0])
        right = np.zeros((36, 4), dtype=complex)

    geom = UeGeometry(range_m=50.0, azimuth_rad=0.0)
    f = build_features(geom, FakeSvd())
    assert f[0] == pytest.approx(1.0)
    assert np.allclose(f[1:4], 0.0)


def test_features_finite_and_bounded():
    geom = UeGeometry(range_m=15.0, azimuth_rad=1.2)
    sample = make_sample(geom, ARRAY, PROP, alpha=0.6)
    assert np.all(np.isfinite(sample.features))
    assert np.all(np.abs(sample.features[6:]) <= 1.0 + 1e-12)


def test_feature_invariance_under_left_unitary():
    # close-in UE: all four singular directions are numerically well
    # conditioned, so the 1e-9 invariance tolerance is meaningful
    geom = UeGeometry(range_m=12.0, azimuth_rad=0.5)
    sample = make_sample(geom, ARRAY, PROP, alpha=0.6)
    rng = np.random.default_rng(0)
    a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    t, _ = np.linalg.qr(a)
    rotated = compact_svd(t @ sample.full_channel.entries)
    f_rot = build_features(geom, rotated)
    assert np.allclose(f_rot, sample.features, atol=1e-9)


def test_weight_decreases_with_range():
    weights = []
    for r in (20.0, 60.0, 180.0):
        s = make_sample(UeGeometry(range_m=r, azimuth_rad=0.4), ARRAY, PROP, alpha=0.6)
        weights.append(s.weight)
        assert s.weight == pytest.approx(r**-0.6)
    assert weights[0] > weights[1] > weights[2]


def test_dataset_cache_roundtrip(tmp_path):
    spec = DatasetSpec(n_train=6, n_val=3, seed=9)
    cache = tmp_path / "ds.npz"
    train1, val1 = load_or_build_dataset(cache, spec, ARRAY, PROP)
    assert cache.exists()
    train2, val2 = load_or_build_dataset(cache, spec, ARRAY, PROP)
    assert len(train1) == len(train2) == 6
    assert len(val1) == len(val2) == 3
    for a, b in zip(train1 + val1, train2 + val2):
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.full_channel.entries, b.full_channel.entries)
        assert a.weight == b.weight


def test_dataset_cache_regenerates_on_mismatch(tmp_path):
    cache = tmp_path / "ds.npz"
    spec1 = DatasetSpec(n_train=4, n_val=2, seed=1)
    load_or_build_dataset(cache, spec1, ARRAY, PROP)
    spec2 = DatasetSpec(n_train=4, n_val=2, seed=2)
    train2, _ = load_or_build_dataset(cache, spec2, ARRAY, PROP)
    direct, _ = build_dataset(spec2, ARRAY, PROP)
    for a, b in zip(train2, direct):
        assert np.array_equal(a.features, b.features)


def test_train_and_val_splits_are_disjoint_draws():
    spec = DatasetSpec(n_train=20, n_val=20, seed=5)
    train, val = build_dataset(spec, ARRAY, PROP)
    r_train = {s.geometry.range_m for s in train}
    r_val = {s.geometry.range_m for s in val}
    assert not r_train & r_val


def test_spec_validation():
    with pytest.raises(ValueError):
        DatasetSpec(n_train=1, n_val=1, alpha=1.5)
    with pytest.raises(ValueError):
        DatasetSpec(n_train=1, n_val=1, sampling="grid")
    with pytest.raises(ValueError):
        DatasetSpec(n_train=-1, n_val=1)
