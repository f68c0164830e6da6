import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loopflow.core import (
    EST_NOC,
    EST_OCC,
    GridDims,
    NOC,
    OCC_IN,
    OCC_OUT,
    Padding,
    UsageError,
    as_flow,
    in_frame_mask,
    init_coord,
    round_landings,
    sample_bilinear,
    target_coords,
    warp_backward,
)


def test_label_values_are_distinct_small_ints():
    assert (NOC, OCC_IN, OCC_OUT) == (0, 1, 2)
    assert (EST_NOC, EST_OCC) == (0, 1)


def test_init_coord_is_x_col_y_row():
    grid = init_coord(GridDims(2, 3))
    assert grid.shape == (2, 3, 2)
    assert grid.dtype == np.float32
    # pixel at row 1, col 2 has coordinates (x=2, y=1)
    assert tuple(grid[1, 2]) == (2.0, 1.0)
    assert tuple(grid[0, 0]) == (0.0, 0.0)


def test_grid_dims_validation():
    with pytest.raises(UsageError):
        GridDims(0, 5).validate()
    assert GridDims(4, 6).n_pixels == 24


def test_as_flow_checks_shape_and_dtype():
    flow = as_flow(np.zeros((3, 3, 2), dtype=np.float64))
    assert flow.dtype == np.float32
    with pytest.raises(UsageError):
        as_flow(np.zeros((3, 3)))
    with pytest.raises(UsageError):
        as_flow(np.zeros((3, 3, 3)))


def test_target_coords_adds_flow_to_pixel_centers():
    flow = np.full((2, 2, 2), 0.5, dtype=np.float32)
    tgt = target_coords(flow)
    assert tuple(tgt[1, 1]) == (1.5, 1.5)


def test_round_landings_ties_to_even():
    coords = np.array([[0.5, 1.5], [2.5, -0.5]], dtype=np.float32)
    landed = round_landings(coords)
    assert landed.tolist() == [[0.0, 2.0], [2.0, -0.0]]


def test_in_frame_mask_uses_rounded_landing():
    dims = GridDims(4, 4)
    coords = np.array(
        [[3.49, 0.0], [3.51, 0.0], [-0.49, 0.0], [-0.51, 0.0], [0.0, 3.5]],
        dtype=np.float32,
    )
    mask = in_frame_mask(coords, dims)
    # 3.49 -> 3 in, 3.51 -> 4 out, -0.49 -> -0 in, -0.51 -> -1 out, y=3.5 -> 4 out
    assert mask.tolist() == [True, False, True, False, False]


def test_sample_bilinear_matches_hand_values():
    field = np.arange(8, dtype=np.float32).reshape(2, 2, 2)
    # center of the 2x2 grid: average of the four corners per channel
    out = sample_bilinear(field, np.array([[[0.5, 0.5]]], dtype=np.float32))
    assert np.allclose(out[0, 0], [(0 + 2 + 4 + 6) / 4, (1 + 3 + 5 + 7) / 4])


def test_sample_bilinear_integer_coords_are_exact_gathers():
    rng = np.random.default_rng(0)
    field = rng.standard_normal((5, 7, 3)).astype(np.float32)
    grid = init_coord(GridDims(5, 7))
    out = sample_bilinear(field, grid)
    assert np.array_equal(out, field)


def test_sample_bilinear_zero_vs_clamp_padding():
    field = np.ones((3, 3, 1), dtype=np.float32)
    coords = np.array([[-0.5, 0.0], [2.5, 2.5]], dtype=np.float32)
    zero = sample_bilinear(field, coords, Padding.ZERO)
    clamp = sample_bilinear(field, coords, Padding.CLAMP)
    assert np.allclose(zero[:, 0], [0.5, 0.25])
    assert np.allclose(clamp[:, 0], [1.0, 1.0])


def test_sample_bilinear_two_d_field():
    field = np.array([[0.0, 1.0], [2.0, 3.0]], dtype=np.float32)
    out = sample_bilinear(field, np.array([[0.5, 0.5]], dtype=np.float32))
    assert out.shape == (1,)
    assert np.allclose(out, 1.5)


def test_sample_bilinear_rejects_bad_coords():
    field = np.zeros((2, 2, 1), dtype=np.float32)
    with pytest.raises(UsageError):
        sample_bilinear(field, np.zeros((3, 3), dtype=np.float32))


def test_warp_backward_identity_flow_is_identity():
    rng = np.random.default_rng(1)
    field = rng.standard_normal((4, 5, 2)).astype(np.float32)
    out = warp_backward(field, np.zeros((4, 5, 2), dtype=np.float32))
    assert np.array_equal(out, field)


def test_warp_backward_integer_shift():
    field = np.zeros((1, 4, 1), dtype=np.float32)
    field[0, :, 0] = [10, 20, 30, 40]
    flow = np.zeros((1, 4, 2), dtype=np.float32)
    flow[..., 0] = 1.0  # read one pixel to the right
    out = warp_backward(field, flow)
    assert out[0, :, 0].tolist() == [20, 30, 40, 0]


@settings(max_examples=50, deadline=None)
@given(
    x=st.floats(min_value=0.0, max_value=3.0, width=32),
    y=st.floats(min_value=0.0, max_value=2.0, width=32),
)
def test_sample_bilinear_within_convex_hull_of_corners(x, y):
    rng = np.random.default_rng(9)
    field = rng.uniform(-1, 1, size=(3, 4, 1)).astype(np.float32)
    out = sample_bilinear(field, np.array([[x, y]], dtype=np.float32))
    assert field.min() - 1e-6 <= out[0, 0] <= field.max() + 1e-6
