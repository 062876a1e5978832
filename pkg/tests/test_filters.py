import numpy as np
import pytest

from spacetune.pipeline import PipelineError, generate_filters, sample_patches, zca_fit


def test_zca_of_white_data_is_near_identity():
    X = np.random.default_rng(0).normal(size=(20000, 5))
    W = zca_fit(X).matrix
    np.testing.assert_allclose(W, np.eye(5), atol=0.05)


def test_zca_symmetric_and_whitens():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(12, 12))
    X = rng.normal(size=(500, 12)) @ A
    white = zca_fit(X)
    np.testing.assert_allclose(white.matrix, white.matrix.T)
    Z = white(X)
    np.testing.assert_allclose(np.cov(Z, rowvar=False), np.eye(12), atol=1e-8)
    # with fresh data from the same distribution the estimate is only approximate
    Z2 = white(rng.normal(size=(500, 12)) @ A)
    assert np.max(np.abs(np.cov(Z2, rowvar=False) - np.eye(12))) < 0.15 * 12


def test_bandpass_damps():
    X = np.random.default_rng(2).normal(size=(1000, 4)) * [10, 1, 0.1, 0.01]
    Z0 = zca_fit(X, 0.0)(X)
    Z1 = zca_fit(X, 1.0)(X)
    assert np.var(Z1[:, 3]) < 1e-3 < np.var(Z0[:, 3])


def test_rank_deficient():
    X = np.random.default_rng(3).normal(size=(100, 3))
    X = np.hstack([X, X[:, :1]])
    with pytest.raises(PipelineError, match="rank"):
        zca_fit(X)
    zca_fit(X, bandpass=0.1)
    with pytest.raises(PipelineError, match="rank"):
        zca_fit(np.ones((10, 4)), bandpass=0.1)


def test_sample_patches():
    maps = np.arange(2 * 5 * 5 * 1, dtype=float).reshape(2, 5, 5, 1)
    P = sample_patches(maps, 2, 50, np.random.default_rng(0))
    assert P.shape == (50, 4)
    # each patch is a contiguous 2x2 block: right neighbour is +1, lower is +5
    np.testing.assert_array_equal(P[:, 1] - P[:, 0], 1)
    np.testing.assert_array_equal(P[:, 2] - P[:, 0], 5)


@pytest.mark.parametrize("strategy", ["random_uniform", "zca_projection", "zca_patches"])
def test_unit_norm_and_deterministic(strategy):
    data = np.random.default_rng(4).normal(size=(10, 8, 8, 3))
    a = generate_filters(strategy, 7, 3, seed=11, data=data, bandpass=0.01)
    b = generate_filters(strategy, 7, 3, seed=11, data=data, bandpass=0.01)
    c = generate_filters(strategy, 7, 3, seed=12, data=data, bandpass=0.01)
    assert a.shape == (7, 3, 3, 3)
    np.testing.assert_allclose(np.linalg.norm(a.filters.reshape(7, -1), axis=1), 1.0)
    np.testing.assert_array_equal(a.filters, b.filters)
    assert not np.array_equal(a.filters, c.filters)


def test_random_uniform_zero_mean():
    F = generate_filters("random_uniform", 20, 4, seed=0, channels=2).filters.reshape(20, -1)
    np.testing.assert_allclose(F.mean(axis=1), 0, atol=1e-12)


def test_zca_patches_are_whitened_data_patches():
    data = np.random.default_rng(5).normal(size=(6, 9, 9, 1))
    bank = generate_filters("zca_patches", 5, 3, seed=3, data=data, n_patches=400)
    rng = np.random.default_rng(3)
    P = sample_patches(data, 3, 400, rng)
    expected = zca_fit(P)(P[:5])
    expected /= np.linalg.norm(expected, axis=1, keepdims=True)
    np.testing.assert_allclose(bank.filters.reshape(5, -1), expected)


def test_zca_patches_on_white_data_are_centered_patches():
    data = np.random.default_rng(6).normal(size=(200, 12, 12, 1))
    bank = generate_filters("zca_patches", 6, 2, seed=8, data=data, n_patches=20000)
    raw = sample_patches(data, 2, 20000, np.random.default_rng(8))[:6]
    raw /= np.linalg.norm(raw, axis=1, keepdims=True)
    np.testing.assert_allclose(bank.filters.reshape(6, -1), raw, atol=0.05)


def test_errors():
    with pytest.raises(PipelineError, match="unknown"):
        generate_filters("gabor", 3, 3, 0, channels=1)
    with pytest.raises(PipelineError, match="data"):
        generate_filters("zca_patches", 3, 3, 0)
