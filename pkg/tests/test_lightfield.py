import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from epiorm.errors import ArgumentError, BorderError, ViewRangeError
from epiorm.lightfield import (
    LightField4D,
    all_patch_pairs_row,
    extract_patch,
    horizontal_epi,
    interior_mask,
    patch_pair,
    subaperture,
    vertical_epi,
)
from epiorm.synth import shear_variance_oracle


def test_subaperture_of_constant_field(constant_lf):
    img = subaperture(constant_lf, 2, 7)
    assert img.shape == (16, 20, 3)
    assert np.all(img == 0.5)


def test_center_view_shape():
    lf = LightField4D(np.zeros((9, 9, 64, 64, 3), np.float32))
    assert (lf.u0, lf.v0) == (4, 4)
    assert subaperture(lf, 4, 4).shape == (64, 64, 3)


def test_subaperture_out_of_range(constant_lf):
    with pytest.raises(ViewRangeError):
        subaperture(constant_lf, 9, 0)
    with pytest.raises(ViewRangeError):
        subaperture(constant_lf, 0, -1)


def test_neighbor_view_is_translated_center(plane_lf):
    lf, _ = plane_lf
    center = subaperture(lf, lf.u0, lf.v0)
    right = subaperture(lf, lf.u0 + 1, lf.v0)
    # disparity 1.0: view u0+1 at x shows what the center view shows at x+1
    np.testing.assert_array_equal(right[:, 5:-5], center[:, 6:-4])


def test_light_field_validation():
    with pytest.raises(ArgumentError):
        LightField4D(np.full((3, 3, 4, 4, 3), 1.5))
    with pytest.raises(ArgumentError):
        LightField4D(np.full((3, 3, 4, 4, 3), np.nan))


def test_epi_of_constant_field(constant_lf):
    assert np.all(horizontal_epi(constant_lf, 3).data == 0.5)
    assert np.all(vertical_epi(constant_lf, 3).data == 0.5)


def test_benchmark_sized_epi():
    data = np.broadcast_to(np.float32(0.25), (9, 9, 512, 512, 3))
    lf = LightField4D(data, check=False)
    epi = horizontal_epi(lf, 100)
    assert epi.data.shape == (9, 512, 3)
    assert (epi.A, epi.S, epi.C) == (9, 512, 3)


def test_epi_range_errors(constant_lf):
    with pytest.raises(ViewRangeError):
        horizontal_epi(constant_lf, 16)
    with pytest.raises(ViewRangeError):
        vertical_epi(constant_lf, 20)


def test_even_angular_extent_rejected():
    lf = LightField4D(np.zeros((8, 8, 5, 5, 1)))
    with pytest.raises(ArgumentError):
        horizontal_epi(lf, 0)


def test_center_row_matches_center_view(random_lf):
    lf = random_lf
    center = subaperture(lf, lf.u0, lf.v0)
    for y in range(lf.Y):
        np.testing.assert_array_equal(horizontal_epi(lf, y).data[lf.u0], center[y])
    for x in range(lf.X):
        np.testing.assert_array_equal(vertical_epi(lf, x).data[lf.v0], center[:, x])


def test_horizontal_slicing_round_trip(random_lf):
    lf = random_lf
    rebuilt = np.stack([horizontal_epi(lf, y).data for y in range(lf.Y)], axis=1)
    np.testing.assert_array_equal(rebuilt, lf.data[lf.v0])


def test_vertical_epi_is_horizontal_epi_of_transpose(random_lf):
    lf = random_lf
    t = lf.transpose()
    for i in (0, 7, 39):
        np.testing.assert_array_equal(vertical_epi(lf, i).data, horizontal_epi(t, i).data)


def test_plane_slope_read_from_both_epis(plane_lf):
    lf, _ = plane_lf
    h = extract_patch(horizontal_epi(lf, 24), 24, 29)
    v = extract_patch(vertical_epi(lf, 24), 24, 29)
    assert shear_variance_oracle(h).disparity == pytest.approx(1.0, abs=0.02)
    assert shear_variance_oracle(v).disparity == pytest.approx(1.0, abs=0.02)


def test_extract_patch_default_size():
    epi = horizontal_epi(LightField4D(np.random.default_rng(0).random((9, 9, 4, 512, 3))), 1)
    patch = extract_patch(epi, 256, 29)
    assert patch.data.shape == (9, 29, 3)
    np.testing.assert_array_equal(patch.data[:, 14], epi.data[:, 256])


def test_extract_patch_width_one(random_lf):
    epi = horizontal_epi(random_lf, 3)
    patch = extract_patch(epi, 17, 1)
    np.testing.assert_array_equal(patch.data[:, 0], epi.data[:, 17])


def test_extract_patch_replicates_left_edge(random_lf):
    epi = horizontal_epi(random_lf, 3)
    patch = extract_patch(epi, 0, 29)
    assert patch.replicated
    for col in range(15):
        np.testing.assert_array_equal(patch.data[:, col], epi.data[:, 0])
    np.testing.assert_array_equal(patch.data[:, 15:], epi.data[:, 1:15])


def test_extract_patch_reject_and_even_width(random_lf):
    epi = horizontal_epi(random_lf, 3)
    with pytest.raises(BorderError):
        extract_patch(epi, 2, 29, border="reject")
    with pytest.raises(ArgumentError):
        extract_patch(epi, 20, 28)


@settings(max_examples=50, deadline=None)
@given(c=st.integers(0, 43), w=st.sampled_from([1, 3, 9, 29]))
def test_replicated_patches_stay_inside_and_match_interior(random_lf, c, w):
    epi = horizontal_epi(random_lf, 5)
    patch = extract_patch(epi, c, w)
    half = (w - 1) // 2
    assert patch.data.shape == (9, w, 3)
    if half <= c < epi.S - half:
        np.testing.assert_array_equal(patch.data, epi.data[:, c - half:c + half + 1])
        assert not patch.replicated


def test_interior_mask_band():
    mask = interior_mask((64, 64), 29)
    assert mask.sum() == 36 * 36
    assert not mask[:14].any() and not mask[:, 50:].any()
    assert mask[14, 14] and mask[49, 49]


def test_row_batch_matches_single_extraction(random_lf):
    lf = random_lf
    h, v = all_patch_pairs_row(lf, 2, 29)
    for x in (0, 13, 43):
        ph, pv = patch_pair(lf, x, 2, 29)
        np.testing.assert_array_equal(h[x], ph.data)
        np.testing.assert_array_equal(v[x], pv.data)
