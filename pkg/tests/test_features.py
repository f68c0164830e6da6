import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loopflow.core import NOC, OCC_IN, UsageError, init_coord
from loopflow.features import (
    DenseFeatureMap,
    IdentityConfig,
    IndexedFeatureMap,
    census_features,
    dense_bundle,
    gather_integer,
    identity_features,
    patch_features,
    same_source_mask,
)
from loopflow.kernels import corr_indexed


def test_identity_similarity_levels(cover_scene):
    bundle = identity_features(cover_scene)
    g = bundle.global0
    # same point scores 1, same object ~0.19, different objects 0
    assert g.point_sim + g.object_sim == pytest.approx(1.0, abs=1e-12)
    assert g.object_sim == pytest.approx(0.435**2 / (0.9**2 + 0.435**2), abs=1e-12)
    loc = bundle.local0
    assert loc.object_sim == pytest.approx(0.9**2 / (0.9**2 + 0.435**2), abs=1e-12)
    assert loc.point_sim + loc.object_sim == pytest.approx(1.0, abs=1e-12)


def test_identity_similarity_matrix_values(cover_scene):
    bundle = identity_features(cover_scene)
    g0, g1 = bundle.global0, bundle.global1
    # anvil is static: its uncovered pixels carry identical ids in both frames
    y, x = 20, 10
    same = corr_indexed(
        g0.point_idx[y, x], g0.object_idx[y, x],
        g1.point_idx[y, x], g1.object_idx[y, x],
        g0.point_sim, g0.object_sim,
    )
    assert same[0, 0] == pytest.approx(1.0, abs=1e-6)
    # two different anvil pixels share only the object block
    other = corr_indexed(
        g0.point_idx[y, x], g0.object_idx[y, x],
        g1.point_idx[y + 1, x + 2], g1.object_idx[y + 1, x + 2],
        g0.point_sim, g0.object_sim,
    )
    assert other[0, 0] == pytest.approx(g0.object_sim, abs=1e-6)
    # anvil vs background: nothing shared
    cross = corr_indexed(
        g0.point_idx[y, x], g0.object_idx[y, x],
        g1.point_idx[0, 0], g1.object_idx[0, 0],
        g0.point_sim, g0.object_sim,
    )
    assert cross[0, 0] == 0.0


def test_indexed_dense_agrees_with_corr_indexed(cover_scene):
    bundle = identity_features(cover_scene)
    g0, g1 = bundle.global0, bundle.global1
    ys, xs = np.mgrid[18:24, 8:14]
    sel0 = (g0.point_idx[ys, xs].ravel(), g0.object_idx[ys, xs].ravel())
    sel1 = (g1.point_idx[ys, xs].ravel(), g1.object_idx[ys, xs].ravel())
    via_ids = corr_indexed(*sel0, *sel1, g0.point_sim, g0.object_sim)
    d0 = g0.dense().reshape(-1, g0.descriptor_dim)[(ys * 64 + xs).ravel()]
    d1 = g1.dense().reshape(-1, g1.descriptor_dim)[(ys * 64 + xs).ravel()]
    via_dense = d0 @ d1.T
    assert np.allclose(via_ids, via_dense, atol=1e-6)


def test_identity_config_validation():
    with pytest.raises(UsageError):
        IdentityConfig(point_weight=0.2, object_weight=0.5).validate()
    with pytest.raises(UsageError):
        IdentityConfig(point_weight=0.5, object_weight=0.0).validate()


def test_injection_swaps_covered_ids(cover_scene):
    clean = identity_features(cover_scene)
    poisoned = identity_features(cover_scene, IdentityConfig(inject_cover_ids=True))
    covered = cover_scene.labels == OCC_IN
    # only the frame-0 global map changes, and only at covered pixels
    assert np.array_equal(
        clean.global0.point_idx[~covered], poisoned.global0.point_idx[~covered]
    )
    assert np.array_equal(clean.global1.point_idx, poisoned.global1.point_idx)
    assert np.array_equal(clean.local0.point_idx, poisoned.local0.point_idx)
    assert (clean.global0.point_idx[covered] != poisoned.global0.point_idx[covered]).any()
    # the injected ids are the occluder's ids at the landing position
    land = np.rint(init_coord(cover_scene.dims) + cover_scene.flow).astype(np.int64)
    ly, lx = land[..., 1][covered], land[..., 0][covered]
    assert np.array_equal(poisoned.global0.point_idx[covered], clean.global1.point_idx[ly, lx])


def test_census_features_shape_and_normalization(rng):
    img = rng.uniform(0, 1, size=(10, 12)).astype(np.float32)
    fmap = census_features(img, window=5)
    assert isinstance(fmap, DenseFeatureMap)
    assert fmap.data.shape == (10, 12, 24)
    norms = np.linalg.norm(fmap.data.astype(np.float64), axis=-1)
    assert np.allclose(norms, 1.0, atol=1e-5)
    assert fmap.normalized


def test_census_is_invariant_to_monotone_rescale(rng):
    img = rng.uniform(0, 1, size=(9, 9)).astype(np.float32)
    a = census_features(img, window=3)
    b = census_features((img * 2.0 + 0.25).astype(np.float32), window=3)
    assert np.array_equal(a.data, b.data)


def test_patch_features_shape_and_mean_zero(rng):
    img = rng.uniform(0, 1, size=(8, 8)).astype(np.float32)
    fmap = patch_features(img, window=3)
    assert fmap.data.shape == (8, 8, 9)
    # interior rows are mean-subtracted before normalization
    interior = fmap.data[2:-2, 2:-2]
    assert np.allclose(interior.sum(axis=-1), 0.0, atol=1e-5)


def test_window_validation(rng):
    img = rng.uniform(0, 1, size=(8, 8)).astype(np.float32)
    with pytest.raises(UsageError):
        census_features(img, window=4)
    with pytest.raises(UsageError):
        census_features(img, window=9)
    with pytest.raises(UsageError):
        patch_features(np.zeros((4, 4, 3), dtype=np.float32))


def test_gather_integer_marks_out_of_frame_null(cover_scene):
    bundle = identity_features(cover_scene)
    coords = np.array([[[0.0, 0.0], [-1.0, 0.0], [63.0, 63.0], [64.0, 2.0]]], dtype=np.float32)
    picked = gather_integer(bundle.global1, coords)
    assert picked.point_idx[0, 0] == bundle.global1.point_idx[0, 0]
    assert picked.point_idx[0, 1] == -1
    assert picked.object_idx[0, 1] == -1
    assert picked.point_idx[0, 2] == bundle.global1.point_idx[63, 63]
    assert picked.point_idx[0, 3] == -1


def test_gather_integer_rejects_fractional_coords(cover_scene):
    bundle = identity_features(cover_scene)
    with pytest.raises(UsageError):
        gather_integer(bundle.global1, np.array([[[0.5, 0.0]]], dtype=np.float32))


def test_gather_integer_dense_zeroes_outside(rng):
    fmap = DenseFeatureMap(data=rng.standard_normal((4, 4, 3)).astype(np.float32))
    picked = gather_integer(fmap, np.array([[[1.0, 1.0], [5.0, 1.0]]], dtype=np.float32))
    assert np.array_equal(picked.data[0, 0], fmap.data[1, 1])
    assert np.all(picked.data[0, 1] == 0.0)


def test_same_source_mask_indexed_is_exact_membership(cover_scene):
    bundle = identity_features(cover_scene)
    mask = same_source_mask(bundle.local0, (10, 20), threshold=0.4)
    assert np.array_equal(mask, cover_scene.obj_id0 == cover_scene.obj_id0[20, 10])
    with pytest.raises(UsageError):
        same_source_mask(bundle.local0, (99, 0), threshold=0.4)


def test_same_source_mask_dense(rng):
    data = np.zeros((2, 2, 2), dtype=np.float32)
    data[..., 0] = 1.0
    data[1, 1] = [0.0, 1.0]
    mask = same_source_mask(DenseFeatureMap(data=data), (0, 0), threshold=0.5)
    assert mask.tolist() == [[True, True], [True, False]]


def test_dense_bundle_shares_maps(rng):
    m0 = census_features(rng.uniform(0, 1, (8, 8)).astype(np.float32))
    m1 = census_features(rng.uniform(0, 1, (8, 8)).astype(np.float32))
    bundle = dense_bundle(m0, m1)
    assert bundle.global0 is bundle.local0 is m0
    assert bundle.global1 is bundle.local1 is m1


@settings(max_examples=30, deadline=None)
@given(
    pw=st.floats(min_value=0.25, max_value=2.0, width=32),
    ratio=st.floats(min_value=0.0625, max_value=0.9375, width=32),
)
def test_identity_similarities_take_exactly_four_values(pw, ratio):
    ow = pw * ratio
    fmap = IndexedFeatureMap(
        point_idx=np.array([[0, 1]], dtype=np.int32),
        object_idx=np.array([[0, 0]], dtype=np.int16),
        point_weight=pw,
        object_weight=ow,
        table_size=2,
        n_objects=1,
    )
    sims = corr_indexed(
        np.array([0, 1, -1], dtype=np.int32),
        np.array([0, 1, -1], dtype=np.int16),
        np.array([0, 0], dtype=np.int32),
        np.array([0, 1], dtype=np.int16),
        fmap.point_sim,
        fmap.object_sim,
    )
    allowed = {0.0, round(fmap.point_sim, 5), round(fmap.object_sim, 5),
               round(fmap.point_sim + fmap.object_sim, 5)}
    got = {round(float(v), 5) for v in sims.ravel()}
    assert got <= allowed
