import os
import struct
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis.extra.numpy import arrays
from hypothesis import strategies as st

from epiorm.errors import DatasetError, FormatError
from epiorm.io import (
    GT_FILE,
    VIEW_PATTERN,
    decode_pfm,
    encode_pfm,
    load_dataset,
    read_params,
    read_pfm,
    read_png,
    write_dataset,
    write_pfm,
    write_png,
)
from epiorm.lightfield import LightField4D
from epiorm.synth import gen_lightfield, random_scene


def test_pfm_small_round_trip(tmp_path):
    img = np.array([[1.5, -2.0], [np.float32(1e-30), 3.25]], dtype=np.float32)
    path = tmp_path / "a.pfm"
    write_pfm(img, path)
    back = read_pfm(path)
    assert back.dtype == np.float32
    assert back.tobytes() == img.tobytes()


@settings(max_examples=50, deadline=None)
@given(arrays(np.float32, st.tuples(st.integers(1, 6), st.integers(1, 6)),
              elements=st.floats(-1e6, 1e6, width=32)),
       st.sampled_from([-1.0, 1.0, -2.5]))
def test_pfm_round_trip_is_bitwise(img, scale):
    assert decode_pfm(encode_pfm(img, scale)).tobytes() == np.ascontiguousarray(img).tobytes()


def test_pfm_color_round_trip():
    img = np.random.default_rng(0).random((3, 4, 3)).astype(np.float32)
    payload = encode_pfm(img)
    assert payload.startswith(b"PF\n4 3\n")
    np.testing.assert_array_equal(decode_pfm(payload), img)


def test_pfm_layout_is_little_endian_bottom_up():
    img = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
    payload = encode_pfm(img, scale=-1.0)
    header = b"Pf\n2 2\n-1.0\n"
    assert payload[:len(header)] == header
    values = struct.unpack("<4f", payload[len(header):])
    assert values == (3.0, 4.0, 1.0, 2.0)


def test_pfm_big_endian_payload():
    img = np.array([[1.0, 2.0]], dtype=np.float32)
    payload = encode_pfm(img, scale=1.0)
    assert struct.unpack(">2f", payload[-8:]) == (1.0, 2.0)
    np.testing.assert_array_equal(decode_pfm(payload), img)
    handmade = b"Pf\n2 1\n1.0\n" + struct.pack(">2f", 5.0, 6.0)
    np.testing.assert_array_equal(decode_pfm(handmade), [[5.0, 6.0]])


def test_pfm_malformed_header_reports_offset():
    with pytest.raises(FormatError, match="offset 0"):
        decode_pfm(b"P6\n2 2\n-1.0\n" + bytes(16))
    with pytest.raises(FormatError, match="offset 3"):
        decode_pfm(b"Pf\nx 2\n-1.0\n" + bytes(16))
    with pytest.raises(FormatError, match="scale"):
        decode_pfm(b"Pf\n2 2\n0\n" + bytes(16))


def test_pfm_truncated_payload_reports_offset():
    payload = encode_pfm(np.ones((3, 3), np.float32))
    with pytest.raises(FormatError, match=r"offset 12"):
        decode_pfm(payload[:-1])
    with pytest.raises(FormatError):
        decode_pfm(b"Pf\n3")


def test_png_round_trip(tmp_path):
    img = np.random.default_rng(1).integers(0, 256, (5, 7, 3), dtype=np.uint8)
    write_png(img, tmp_path / "x.png")
    np.testing.assert_array_equal(read_png(tmp_path / "x.png"), img)


@pytest.fixture(scope="module")
def synthetic_dataset(tmp_path_factory):
    lf, dmap = gen_lightfield(random_scene(4, size=64))
    directory = tmp_path_factory.mktemp("ds")
    expected = write_dataset(directory, lf, dmap)
    return directory, expected, dmap


def test_dataset_round_trip(synthetic_dataset):
    directory, expected, dmap = synthetic_dataset
    lf, gt, params = load_dataset(directory)
    assert lf == expected
    assert lf.data.shape == (9, 9, 64, 64, 3)
    np.testing.assert_array_equal(gt.values, dmap.values.astype(np.float32))
    assert params["disp_range"] == (float(dmap.values.min()), float(dmap.values.max()))


def test_view_order_matches_file_index(synthetic_dataset):
    directory, expected, _ = synthetic_dataset
    u, v = 6, 2
    img = read_png(os.path.join(directory, VIEW_PATTERN.format(index=v * 9 + u)))
    np.testing.assert_array_equal(img, expected.to_uint8()[v, u])


def test_gt_extents_match_parameters(synthetic_dataset):
    directory, _, _ = synthetic_dataset
    params = read_params(os.path.join(directory, "parameters.cfg"))
    gt = read_pfm(os.path.join(directory, GT_FILE))
    assert gt.shape == (int(params["intrinsics"]["height"]), int(params["intrinsics"]["width"]))


def test_dataset_loads_quickly(synthetic_dataset):
    directory, _, _ = synthetic_dataset
    start = time.perf_counter()
    load_dataset(directory)
    assert time.perf_counter() - start < 1.0


def test_missing_view_is_named(tmp_path):
    lf = LightField4D(np.random.default_rng(0).random((3, 3, 8, 8, 3)))
    write_dataset(tmp_path, lf)
    os.remove(tmp_path / VIEW_PATTERN.format(index=5))
    with pytest.raises(DatasetError, match=r"missing view 5 \(u=2, v=1\)"):
        load_dataset(tmp_path)


def test_inconsistent_view_size(tmp_path):
    lf = LightField4D(np.random.default_rng(0).random((3, 3, 8, 8, 3)))
    write_dataset(tmp_path, lf)
    write_png(np.zeros((8, 9, 3), np.uint8), tmp_path / VIEW_PATTERN.format(index=4))
    with pytest.raises(DatasetError, match="view 4"):
        load_dataset(tmp_path)


def test_missing_parameters_file(tmp_path):
    with pytest.raises(DatasetError):
        load_dataset(tmp_path)


def test_writes_leave_no_temporaries(synthetic_dataset):
    directory, _, _ = synthetic_dataset
    assert not [p for p in os.listdir(directory) if p.startswith(".tmp")]
