import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from scipy import stats

from hycass import data as D
from hycass.errors import (
    DegenerateRangeError,
    DimensionOverflowError,
    EmptyDatasetError,
    MalformedMagicError,
    ShapeError,
    TruncatedPayloadError,
)

dims = st.tuples(st.integers(1, 5), st.integers(1, 5), st.integers(1, 6))


@given(hnp.arrays(np.uint16, dims))
def test_hsc_roundtrip_u16(arr):
    cube = D.HsiCube(arr)
    back = D.decode_cube(D.encode_cube(cube))
    assert back.equals(cube)


@given(hnp.arrays(np.float32, dims, elements=st.floats(-1e6, 1e6, width=32)))
def test_hsc_roundtrip_f32(arr):
    cube = D.HsiCube(arr, bit_depth=32)
    assert D.decode_cube(D.encode_cube(cube)).equals(cube)


def test_hsc_file_size_and_layout(tmp_path):
    cube = D.HsiCube(np.array([[[513]]], dtype=np.uint16))
    path = tmp_path / "one.hsc"
    D.write_cube(cube, path)
    buf = path.read_bytes()
    assert D.HSC_HEADER_SIZE == 25 and len(buf) == 27
    assert buf[:4] == b"HSC1" and buf[4:16] == b"\x01\0\0\0" * 3
    assert buf[16] == D.DTYPE_U16_RAW and buf[25:] == b"\x01\x02"
    assert D.read_cube(path).equals(cube)


def test_hsc_unit_cube_keeps_norm():
    norm = D.NormalizationParams(3.0, 7.0)
    cube = D.HsiCube(np.full((2, 2, 2), 0.5, np.float32), bit_depth=32, norm_state=D.UNIT, norm=norm)
    back = D.decode_cube(D.encode_cube(cube))
    assert back.norm_state == D.UNIT and (back.norm.v_min, back.norm.v_max) == (3.0, 7.0)


def test_hsc_errors():
    buf = D.encode_cube(D.HsiCube(np.zeros((2, 3, 4), np.uint16)))
    with pytest.raises(MalformedMagicError):
        D.decode_cube(b"XSC1" + buf[4:])
    with pytest.raises(TruncatedPayloadError):
        D.decode_cube(buf[:10])
    with pytest.raises(TruncatedPayloadError):
        D.decode_cube(buf[:-1])
    with pytest.raises(DimensionOverflowError):
        D.decode_cube(buf + b"\0")
    huge = D._HSC_HEADER.pack(b"HSC1", 2**31, 2**31, 4, 0, 0.0, 1.0)
    with pytest.raises(DimensionOverflowError):
        D.decode_cube(huge)


def test_normalize_examples():
    cube = D.HsiCube(np.array([0, 5, 10], dtype=np.uint16).reshape(1, 1, 3))
    unit, p = D.min_max_normalize(cube)
    np.testing.assert_array_equal(unit.values.ravel(), [0, 0.5, 1])
    assert (p.v_min, p.v_max) == (0.0, 10.0) and unit.norm_state == D.UNIT
    back = D.denormalize(D.HsiCube(np.full((1, 1, 1), 0.25), norm_state=D.UNIT), D.NormalizationParams(3, 4))
    assert back.values.item() == 3.25
    with pytest.raises(DegenerateRangeError):
        D.min_max_normalize(D.HsiCube(np.full((2, 2, 2), 7, np.uint16)))
    with pytest.raises(ValueError):
        D.min_max_normalize(unit)


def test_normalize_per_band(rng):
    v = rng.integers(0, 1000, (4, 4, 3)).astype(np.uint16)
    unit, p = D.min_max_normalize(D.HsiCube(v), per_band=True)
    assert p.per_band
    np.testing.assert_allclose(unit.values.min(axis=(0, 1)), 0)
    np.testing.assert_allclose(unit.values.max(axis=(0, 1)), 1)
    np.testing.assert_allclose(D.denormalize(unit, p).values, v, atol=1e-9)


@given(hnp.arrays(np.uint16, dims))
def test_normalize_roundtrip_u16(arr):
    if arr.min() == arr.max():
        return
    unit, p = D.min_max_normalize(D.HsiCube(arr))
    assert unit.values.min() == 0 and unit.values.max() == 1
    back = D.denormalize(unit, p).values
    assert np.max(np.abs(back - arr)) < 1e-3


def test_center_crop():
    v = np.arange(100 * 100).reshape(100, 100, 1)
    c = D.center_crop(D.HsiCube(v), 96, 96)
    assert c.shape == (96, 96, 1) and c.values[0, 0, 0] == v[2, 2, 0]
    small = D.center_crop(D.HsiCube(np.arange(25).reshape(5, 5, 1)), 3, 3)
    np.testing.assert_array_equal(small.values[:, :, 0], np.arange(25).reshape(5, 5)[1:4, 1:4])
    with pytest.raises(ShapeError):
        D.center_crop(D.HsiCube(v), 101, 10)


def test_sample_patch_deterministic(rng):
    cube = D.HsiCube(rng.integers(0, 100, (20, 20, 2)).astype(np.uint16))
    a = D.sample_patch(cube, 8, np.random.default_rng(5))
    b = D.sample_patch(cube, 8, np.random.default_rng(5))
    assert a.equals(b) and a.shape == (8, 8, 2)
    with pytest.raises(ShapeError):
        D.sample_patch(cube, 21, rng)


def test_sample_patch_corner_uniform():
    # the corner is recoverable from the patch's first value
    H, W, size = 6, 5, 3
    cube = D.HsiCube(np.arange(H * W).reshape(H, W, 1).astype(np.uint16))
    rng = np.random.default_rng(2024)
    counts = np.zeros((H - size + 1) * (W - size + 1))
    for _ in range(10_000):
        first = int(D.sample_patch(cube, size, rng).values[0, 0, 0])
        top, left = divmod(first, W)
        counts[top * (W - size + 1) + left] += 1
    assert stats.chisquare(counts).pvalue > 0.01


def test_synth_rank_one_and_determinism():
    spec = D.SyntheticSpec(count=2, height=8, width=8, bands=10, smoothness=math.inf, endmembers=1, noise=0)
    cubes = D.synth_dataset(spec)
    for c in cubes:
        x = c.values.reshape(-1, 10).astype(float)
        assert np.all(x == x[0])  # spatially constant, one spectrum
    again = D.synth_dataset(spec)
    assert all(a.equals(b) for a, b in zip(cubes, again))
    other = D.synth_dataset(D.SyntheticSpec(count=1, seed=1))
    assert not other[0].equals(D.synth_dataset(D.SyntheticSpec(count=1, seed=0))[0])


def test_synth_rank_matches_endmembers():
    spec = D.SyntheticSpec(height=24, width=24, bands=20, endmembers=3, noise=0, peak=60000)
    x = D.synth_dataset(spec)[0].values.reshape(-1, 20).astype(float)
    s = np.linalg.svd(x, compute_uv=False)
    assert s[2] / s[0] > 1e-3
    assert s[3] / s[0] < 1e-4  # only u16 rounding beyond rank 3


def test_synth_validation():
    with pytest.raises(ValueError):
        D.SyntheticSpec(bands=4, endmembers=5)


def test_split_sizes():
    s = D.split_dataset(list(range(10)))
    assert (len(s.train), len(s.val), len(s.test)) == (7, 2, 1)
    assert D.split_dataset(list(range(10))) == s
    with pytest.warns(UserWarning):
        one = D.split_dataset([0])
    assert one.train == [0] and one.degenerate
    with pytest.raises(EmptyDatasetError):
        D.split_dataset([])
    with pytest.raises(ValueError):
        D.SplitSpec(0.5, 0.2, 0.2)


@given(st.integers(1, 60), st.integers(0, 2**16))
def test_split_partition_property(n, seed):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        s = D.split_dataset(list(range(n)), D.SplitSpec(seed=seed))
    assert sorted(s.train + s.val + s.test) == list(range(n))
    assert len(s.train) >= 1


def test_cube_validation():
    with pytest.raises(ShapeError):
        D.HsiCube(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        D.HsiCube(np.full((1, 1, 1), 2.0), norm_state=D.UNIT)
