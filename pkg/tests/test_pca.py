import numpy as np
import pytest
from scipy import linalg

from hycass.data import HsiCube, SyntheticSpec, min_max_normalize, synth_dataset
from hycass.errors import InsufficientRankError, ShapeError
from hycass.evaluation import mse, pca_codec, pca_fit


@pytest.fixture(scope="module")
def cube():
    c = synth_dataset(SyntheticSpec(height=24, width=24, bands=12, endmembers=4, seed=2, noise=2e-3))[0]
    return min_max_normalize(c)[0]


def test_full_rank_is_exact(cube):
    rec, cr = pca_codec(cube, pca_fit(cube, 12))
    assert cr == 1.0
    assert np.linalg.norm(rec - cube.values) / np.linalg.norm(cube.values) < 1e-5


def test_rank_one_data(rng):
    spectrum = rng.random(6) + 0.1
    x = rng.random((50, 1)) * spectrum
    m = pca_fit(x, 1)
    rec = m.reconstruct(m.project(x))
    np.testing.assert_allclose(rec, x, atol=1e-12)
    with pytest.raises(InsufficientRankError):
        pca_fit(x, 2)


def test_explained_variance_matches_eigensolver(cube):
    x = cube.values.reshape(-1, 12)
    m = pca_fit(cube, 5)
    ev = linalg.eigh(np.cov(x, rowvar=False), eigvals_only=True)[::-1]
    np.testing.assert_allclose(m.explained_variance, ev[:5], rtol=0, atol=1e-8)


def test_error_non_increasing_in_gamma(cube):
    errs = [mse(cube.values, pca_codec(cube, pca_fit(cube, g))[0]) for g in range(1, 13)]
    assert all(b <= a + 1e-15 for a, b in zip(errs, errs[1:]))


def test_cr_and_axes(cube, rng):
    x = rng.random((300, 202))
    m = pca_fit(x, 2)
    assert m.cr_spec == 101.0
    m = pca_fit(cube, 4)
    np.testing.assert_allclose(m.axes.T @ m.axes, np.eye(4), atol=1e-12)
    pivot = np.argmax(np.abs(m.axes), axis=0)
    assert np.all(m.axes[pivot, range(4)] > 0)


def test_subsample_deterministic(rng):
    x = rng.random((500, 4))
    a = pca_fit(x, 2, max_pixels=100, seed=3)
    b = pca_fit(x, 2, max_pixels=100, seed=3)
    np.testing.assert_array_equal(a.axes, b.axes)
    assert not np.array_equal(a.mean, pca_fit(x, 2, max_pixels=100, seed=4).mean)


def test_list_of_cubes_and_errors(cube):
    m = pca_fit([cube, cube], 3)
    np.testing.assert_allclose(m.mean, cube.values.reshape(-1, 12).mean(0))
    with pytest.raises(ValueError):
        pca_fit(cube, 13)
    with pytest.raises(ShapeError):
        pca_codec(HsiCube(np.zeros((2, 2, 5))), m)
