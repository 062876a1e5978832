"""Filter generation: random uniform filters and two ZCA-based strategies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ops import PipelineError

__all__ = ["STRATEGIES", "FilterBank", "Whitening", "generate_filters", "sample_patches", "zca_fit"]

STRATEGIES = ("random_uniform", "zca_projection", "zca_patches")


@dataclass(frozen=True)
class Whitening:
    mean: np.ndarray
    matrix: np.ndarray

    def __call__(self, patches):
        return (np.asarray(patches, dtype=np.float64) - self.mean) @ self.matrix


@dataclass(frozen=True)
class FilterBank:
    filters: np.ndarray  # (K, S, S, C)
    strategy: str
    seed: int

    @property
    def shape(self):
        return self.filters.shape


def zca_fit(patches, bandpass: float = 0.0) -> Whitening:
    """Symmetric whitening ``E diag(1/sqrt(lam + bandpass)) E^T`` of the patch covariance.

    Parameters
    ----------
    patches : array, shape (n, d)
        Flattened patches, ``n >= 2``.
    bandpass : float
        Added to every eigenvalue; damps the low-variance (high-frequency)
        directions.  Zero gives exact whitening and requires full rank.
    """
    X = np.asarray(patches, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2 or X.shape[1] < 1:
        raise PipelineError(f"need an (n >= 2, d >= 1) patch matrix, got {X.shape}")
    if bandpass < 0:
        raise PipelineError("bandpass must be >= 0")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (X.shape[0] - 1)
    lam, E = np.linalg.eigh(cov)
    top = lam[-1]
    tiny = max(top, 1.0) * X.shape[1] * np.finfo(float).eps * 10
    if top <= tiny:
        raise PipelineError("patch covariance is rank deficient (all patches identical)")
    if bandpass == 0 and lam[0] <= tiny:
        raise PipelineError(
            f"patch covariance is rank deficient ({int(np.sum(lam <= tiny))} null directions); "
            "use bandpass > 0"
        )
    lam = np.maximum(lam, 0.0)
    W = (E / np.sqrt(lam + bandpass)) @ E.T
    return Whitening(mean, (W + W.T) / 2)


def sample_patches(maps, size: int, n: int, rng) -> np.ndarray:
    """``n`` random ``size x size`` patches from ``maps`` (N, H, W, C), flattened."""
    maps = np.asarray(maps)
    if maps.ndim == 3:
        maps = maps[None]
    N, H, W, C = maps.shape
    if size > min(H, W):
        raise PipelineError(f"patch size {size} does not fit {H}x{W} maps")
    img = rng.integers(N, size=n)
    i = rng.integers(H - size + 1, size=n)
    j = rng.integers(W - size + 1, size=n)
    di, dj = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    rows = i[:, None, None] + di
    cols = j[:, None, None] + dj
    patches = maps[img[:, None, None], rows, cols]  # (n, size, size, C)
    return patches.reshape(n, -1).astype(np.float64)


def _unit_rows(F):
    norms = np.linalg.norm(F, axis=1, keepdims=True)
    return F / np.where(norms > 0, norms, 1.0)


def generate_filters(
    strategy: str,
    count: int,
    size: int,
    seed: int,
    data=None,
    channels: int | None = None,
    bandpass: float = 0.0,
    n_patches: int = 10000,
) -> FilterBank:
    """Build ``count`` filters of shape ``(size, size, C)``, each with unit norm.

    ``random_uniform`` draws entries from U(-1, 1) and removes each filter's
    mean.  ``zca_projection`` maps random unit directions through the
    whitening matrix.  ``zca_patches`` whitens randomly chosen data patches
    (the first ``count`` of the ``n_patches`` used to fit the whitening).
    ``data`` is an ``(N, H, W, C)`` stack of feature maps.
    """
    if strategy not in STRATEGIES:
        raise PipelineError(f"unknown filter strategy {strategy!r}")
    if count < 1 or size < 1:
        raise PipelineError("filter count and size must be >= 1")
    rng = np.random.default_rng(seed)
    if strategy == "random_uniform":
        if channels is None:
            if data is None:
                raise PipelineError("random_uniform needs channels or data")
            channels = np.asarray(data).shape[-1]
        F = rng.uniform(-1.0, 1.0, size=(count, size * size * channels))
        F -= F.mean(axis=1, keepdims=True)
        return FilterBank(_unit_rows(F).reshape(count, size, size, channels), strategy, seed)

    if data is None:
        raise PipelineError(f"{strategy} needs data to fit the whitening")
    channels = np.asarray(data).shape[-1]
    patches = sample_patches(data, size, max(n_patches, count), rng)
    white = zca_fit(patches, bandpass)
    if strategy == "zca_projection":
        R = _unit_rows(rng.standard_normal((count, patches.shape[1])))
        F = R @ white.matrix
    else:
        F = white(patches[:count])
    return FilterBank(_unit_rows(F).reshape(count, size, size, channels), strategy, seed)
