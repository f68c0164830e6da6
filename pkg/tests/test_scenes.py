import numpy as np
import pytest

from loopflow.core import NOC, OCC_IN, OCC_OUT, UsageError, init_coord
from loopflow.scenes import (
    ObjectSpec,
    RigidMotion,
    SceneSpec,
    hash_texture,
    points_in_polygon,
    rect,
    render,
    standard_suite,
    suite_scene,
)


def make_scene(name, h, w, objects, seed=7):
    return SceneSpec(name=name, height=h, width=w, seed=seed, objects=objects)


def test_background_only_scene_is_all_noc_zero_flow():
    scene = render(make_scene("empty", 16, 16, []))
    assert np.all(scene.labels == NOC)
    assert np.all(scene.flow == 0.0)
    assert np.all(np.isfinite(scene.frame0))


def test_square_translating_out_of_frame_counts():
    # 10x10 square with left edge at x=15 inside a 32x32 frame, moved by
    # (12, 0): columns whose landing x exceeds the last column are OCC_OUT.
    square = ObjectSpec(
        name="square",
        polygon=rect(14.5, 9.5, 24.5, 19.5),
        z_order=1,
        motion=RigidMotion(translation=(12.0, 0.0)),
    )
    scene = render(make_scene("exit", 32, 32, [square]))
    # landing x = mx + 12 rounds outside for mx >= 20: 5 of 10 columns
    expected_out = 5 * 10
    # the square's new footprint covers background columns 27..31
    expected_in = 5 * 10
    counts = dict(zip(*np.unique(scene.labels, return_counts=True)))
    assert counts[OCC_OUT] == expected_out
    assert counts[OCC_IN] == expected_in
    assert counts[NOC] == 32 * 32 - expected_out - expected_in
    # occluded square pixels still carry the true motion
    sq = (scene.obj_id0 == 1) & (scene.labels == OCC_OUT)
    assert np.all(scene.flow[sq] == np.array([12.0, 0.0], dtype=np.float32))


def test_static_square_covered_by_mover_is_occ_in():
    a = ObjectSpec(name="a", polygon=rect(1.5, 3.5, 6.5, 8.5), z_order=1,
                   motion=RigidMotion())
    b = ObjectSpec(name="b", polygon=rect(9.5, 3.5, 14.5, 8.5), z_order=2,
                   motion=RigidMotion(translation=(-6.0, 0.0)))
    scene = render(make_scene("cover2", 16, 20, [a, b]))
    covered = (scene.obj_id0 == 1) & (scene.labels == OCC_IN)
    # b lands on x in [4, 9]; a occupies x in [2, 6]: overlap columns 4..6
    assert covered.sum() == 3 * 5
    # a is static, so its flow is zero even where covered
    assert np.all(scene.flow[scene.obj_id0 == 1] == 0.0)


def test_rigid_motion_validation_and_roundtrip():
    with pytest.raises(UsageError):
        RigidMotion(theta=4.0).validate()
    m = RigidMotion(theta=0.3, center=(2.0, 5.0), translation=(1.0, -1.0))
    again = RigidMotion.from_dict(m.to_dict())
    assert again == m


def test_rigid_motion_apply_rotates_about_center():
    m = RigidMotion(theta=np.pi / 2, center=(1.0, 1.0))
    moved = m.apply(np.array([[2.0, 1.0]]))
    assert np.allclose(moved, [[1.0, 2.0]], atol=1e-12)


def test_points_in_polygon_on_rect():
    poly = rect(0.5, 0.5, 2.5, 3.5)
    pts = np.array([[1, 1], [2, 3], [0, 1], [3, 1], [1, 4]], dtype=np.float64)
    inside = points_in_polygon(pts, np.asarray(poly, dtype=np.float64))
    assert inside.tolist() == [True, True, False, False, False]


def test_points_in_polygon_l_shape():
    poly = np.array(
        [(0.5, 0.5), (4.5, 0.5), (4.5, 2.5), (2.5, 2.5), (2.5, 4.5), (0.5, 4.5)],
        dtype=np.float64,
    )
    pts = np.array([[1, 1], [4, 2], [4, 4], [1, 4]], dtype=np.float64)
    inside = points_in_polygon(pts, poly)
    assert inside.tolist() == [True, True, False, True]


def test_hash_texture_deterministic_and_bounded():
    a = hash_texture(3, 1, np.array([4, 5]), np.array([6, 7]))
    b = hash_texture(3, 1, np.array([4, 5]), np.array([6, 7]))
    assert np.array_equal(a, b)
    assert a.dtype == np.float32
    assert np.all((a >= 0.0) & (a < 1.0))
    c = hash_texture(4, 1, np.array([4, 5]), np.array([6, 7]))
    assert not np.array_equal(a, c)


def test_render_is_deterministic(suite_renders):
    for spec in standard_suite(0):
        again = render(spec)
        ref = suite_renders[spec.name]
        assert np.array_equal(again.frame0, ref.frame0)
        assert np.array_equal(again.frame1, ref.frame1)
        assert np.array_equal(again.flow, ref.flow)
        assert np.array_equal(again.labels, ref.labels)


def test_standard_suite_is_deterministic_and_big_enough():
    a = standard_suite(5)
    b = standard_suite(5)
    assert len(a) >= 6
    assert [s.to_dict() for s in a] == [s.to_dict() for s in b]
    with pytest.raises(UsageError):
        suite_scene("missing_scene", 5)


def test_suite_covers_all_label_kinds(suite_renders):
    seen = set()
    for scene in suite_renders.values():
        seen.update(np.unique(scene.labels).tolist())
    assert seen == {NOC, OCC_IN, OCC_OUT}


def test_scene_render_invariants(suite_renders):
    """Labels must agree with the id maps: NOC iff the rounded landing is
    in frame and shows the same material point; OCC_OUT iff it is out of
    frame; OCC_IN otherwise."""
    for name, scene in suite_renders.items():
        h, w = scene.dims
        assert scene.flow.dtype == np.float32
        assert np.all(np.isfinite(scene.flow))
        assert set(np.unique(scene.labels)) <= {NOC, OCC_IN, OCC_OUT}

        target = init_coord(scene.dims) + scene.flow
        landing = np.rint(target).astype(np.int64)
        inside = (
            (landing[..., 0] >= 0) & (landing[..., 0] <= w - 1)
            & (landing[..., 1] >= 0) & (landing[..., 1] <= h - 1)
        )
        assert np.all((scene.labels == OCC_OUT) == ~inside), name

        lx = np.clip(landing[..., 0], 0, w - 1)
        ly = np.clip(landing[..., 1], 0, h - 1)
        same_pt = (
            (scene.pt_id1[ly, lx] == scene.pt_id0).all(axis=-1)
            & (scene.obj_id1[ly, lx] == scene.obj_id0)
        )
        assert np.all((scene.labels == NOC) == (inside & same_pt)), name
        assert np.all((scene.labels == OCC_IN) == (inside & ~same_pt)), name


def test_scene_spec_serialization_roundtrip():
    spec = standard_suite(3)[4]
    again = SceneSpec.from_dict(spec.to_dict())
    assert again.to_dict() == spec.to_dict()
    assert np.array_equal(render(again).labels, render(spec).labels)


def test_spec_validation_rejects_duplicates():
    a = ObjectSpec(name="a", polygon=rect(0.5, 0.5, 2.5, 2.5), z_order=1, motion=RigidMotion())
    b = ObjectSpec(name="a", polygon=rect(3.5, 3.5, 5.5, 5.5), z_order=2, motion=RigidMotion())
    with pytest.raises(UsageError):
        make_scene("dup", 8, 8, [a, b]).validate()
    c = ObjectSpec(name="c", polygon=rect(3.5, 3.5, 5.5, 5.5), z_order=1, motion=RigidMotion())
    with pytest.raises(UsageError):
        make_scene("dupz", 8, 8, [a, c]).validate()


def test_degenerate_polygon_rejected():
    with pytest.raises(UsageError):
        ObjectSpec(name="line", polygon=[(0.0, 0.0), (1.0, 1.0)], z_order=1,
                   motion=RigidMotion()).validate()
