"""Feature-map operators.

Every operator takes a feature map of shape ``(H, W, C)``, or a batch of them
``(N, H, W, C)``, and works on the valid region only: no padding and no
filter flip.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "DihistParams",
    "FbnccParams",
    "LnormParams",
    "LpoolParams",
    "PipelineError",
    "box_sum",
    "dihist",
    "fbncc",
    "lnorm",
    "lpool",
]


class PipelineError(ValueError):
    """Shape underflow or an illegal operator parameter."""


@dataclass(frozen=True)
class FbnccParams:
    beta: float = 1.0
    rho: int = 0
    eps: int = 1

    def __post_init__(self):
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise PipelineError(f"beta must be finite and > 0, got {self.beta}")


@dataclass(frozen=True)
class LpoolParams:
    size: int = 2
    stride: int = 1
    p: float = 2.0

    def __post_init__(self):
        if self.size < 1 or self.stride < 1:
            raise PipelineError("pool size and stride must be >= 1")
        if not self.p > 0:
            raise PipelineError(f"p must be > 0, got {self.p}")


@dataclass(frozen=True)
class LnormParams:
    tau: float = 1.0
    size: int = 3

    def __post_init__(self):
        if not self.tau > 0:
            raise PipelineError(f"tau must be > 0, got {self.tau}")
        if self.size < 1:
            raise PipelineError("neighbourhood size must be >= 1")


@dataclass(frozen=True)
class DihistParams:
    """``mode="grid"`` sums over ``grid x grid`` cells partitioning the map;
    ``mode="box"`` slides a ``side x side`` box every ``subsample`` pixels."""

    alpha: float = 0.0
    mode: str = "grid"
    grid: int = 2
    subsample: int = 1
    side: int = 2

    def __post_init__(self):
        if not self.alpha >= 0:
            raise PipelineError(f"alpha must be >= 0, got {self.alpha}")
        if self.mode not in ("grid", "box"):
            raise PipelineError(f"unknown dihist mode {self.mode!r}")
        if self.grid < 1 or self.subsample < 1 or self.side < 1:
            raise PipelineError("grid, subsample and side must be >= 1")


def _as_map(x):
    x = np.asarray(x)
    if x.ndim not in (3, 4):
        raise PipelineError(f"expected (H, W, C) or (N, H, W, C), got shape {x.shape}")
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(np.float64)
    return x


def _need(x, size, what):
    H, W = x.shape[-3:-1]
    if size > min(H, W):
        raise PipelineError(f"{what} of size {size} does not fit a {H}x{W} map")


def box_sum(x, size):
    """Sum over every ``size x size`` spatial window, per channel."""
    return sliding_window_view(x, (size, size), axis=(-3, -2)).sum(axis=(-2, -1))


def fbncc(x, filters, params: FbnccParams):
    """Filter-bank normalized cross-correlation.

    ``filters`` has shape ``(K, S, S, C)``.  Each ``S x S x C`` patch ``u``
    (optionally mean-shifted when ``params.eps``) is correlated with every
    filter and divided by ``sqrt(rho*max(|u|^2, beta) + (1-rho)*(|u|^2 + beta))``.
    Output shape ``(..., H-S+1, W-S+1, K)``.
    """
    x = _as_map(x)
    f = np.asarray(filters, dtype=x.dtype)
    if f.ndim != 4 or f.shape[1] != f.shape[2]:
        raise PipelineError(f"filters must be (K, S, S, C), got {f.shape}")
    K, S, _, C = f.shape
    if x.shape[-1] != C:
        raise PipelineError(f"map has {x.shape[-1]} channels, filters expect {C}")
    _need(x, S, "filter")
    H, W = x.shape[-3:-1]
    Ho, Wo = H - S + 1, W - S + 1

    corr = np.zeros(x.shape[:-3] + (Ho, Wo, K), dtype=x.dtype)
    for a in range(S):
        for b in range(S):
            corr += x[..., a : a + Ho, b : b + Wo, :] @ f[:, a, b, :].T

    x64 = x.astype(np.float64, copy=False)
    sx = box_sum(x64, S).sum(axis=-1)
    sxx = box_sum(x64 * x64, S).sum(axis=-1)
    D = S * S * C
    if params.eps:
        mean = sx / D
        num = corr - (mean[..., None] * f.sum(axis=(1, 2, 3))).astype(x.dtype)
        sq = sxx - sx * mean
    else:
        num = corr
        sq = sxx
    sq = np.maximum(sq, 0.0)
    rho = float(params.rho)
    den = np.sqrt(rho * np.maximum(sq, params.beta) + (1.0 - rho) * (sq + params.beta))
    den = den[..., None].astype(x.dtype)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, num / den, 0).astype(x.dtype)


def lpool(x, params: LpoolParams):
    """Strided per-channel p-norm over ``size x size`` patches."""
    x = _as_map(x)
    _need(x, params.size, "pool")
    p = float(params.p)
    pooled = box_sum(np.abs(x) ** p, params.size) ** (1.0 / p)
    return pooled[..., :: params.stride, :: params.stride, :]


def lnorm(x, params: LnormParams):
    """Divide by the all-channel neighbourhood L2 norm where it exceeds ``tau``.

    The normalized element is the neighbourhood's centre (upper-left of the
    two middle pixels for even sizes), so the output is the valid region.
    """
    x = _as_map(x)
    n = params.size
    _need(x, n, "lnorm neighbourhood")
    norm = np.sqrt(box_sum(x * x, n).sum(axis=-1))[..., None]
    H, W = x.shape[-3:-1]
    c = (n - 1) // 2
    centre = x[..., c : c + H - n + 1, c : c + W - n + 1, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(norm > params.tau, centre / norm, centre)


def _grid_edges(length, cells):
    return (np.arange(cells) * length) // cells


def dihist(x, params: DihistParams):
    """Positive and negative half-rectified sums over pooling regions.

    Output channels are ``[pos_0 .. pos_{K-1}, neg_0 .. neg_{K-1}]`` where
    ``pos = sum(max(x - alpha, 0))`` and ``neg = sum(max(-x - alpha, 0))``.
    """
    x = _as_map(x)
    pos = np.maximum(x - params.alpha, 0)
    neg = np.maximum(-x - params.alpha, 0)
    both = np.concatenate([pos, neg], axis=-1)
    H, W = x.shape[-3:-1]
    if params.mode == "grid":
        g = params.grid
        if g > min(H, W):
            raise PipelineError(f"{g}x{g} grid does not fit a {H}x{W} map")
        out = np.add.reduceat(both, _grid_edges(H, g), axis=-3)
        return np.add.reduceat(out, _grid_edges(W, g), axis=-2)
    _need(x, params.side, "dihist box")
    s = params.subsample
    return box_sum(both, params.side)[..., ::s, ::s, :]
