"""Suggestion algorithms: prior sampling and Tree-of-Parzen-Estimators.

Both algorithms are pure functions of ``(graph, snapshot, seed)``.  TPE
treats every label independently: it ranks the ok trials in which the label
was active, fits one Parzen density to the values of the best few trials
(``l``) and one to the rest (``g``), draws candidates from ``l`` and keeps
the candidate with the largest ``l(x) / g(x)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp, log_ndtr, ndtr, ndtri

from .searchspace import Assignment, ExprGraph, ExprNode, _prior_draw, _walk, sample_prior

__all__ = [
    "CategoricalDensity",
    "HPOAConfig",
    "ParzenDensity",
    "fit_categorical",
    "fit_parzen",
    "n_best",
    "split_best_rest",
    "suggest",
    "suggest_random",
    "tpe_suggest",
    "trial_weights",
]

_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


@dataclass(frozen=True)
class HPOAConfig:
    seed: int = 0
    n_startup: int = 50
    ramp_flat: int = 25
    n_candidates: int = 24
    prior_weight: float = 1.0

    def __post_init__(self):
        if self.n_startup < 0:
            raise ValueError("n_startup must be >= 0")
        if self.ramp_flat < 1:
            raise ValueError("ramp_flat must be >= 1")
        if self.n_candidates < 1:
            raise ValueError("n_candidates must be >= 1")
        if not self.prior_weight > 0:
            raise ValueError("prior_weight must be > 0")


def n_best(T: int) -> int:
    """Size of the "good" set out of ``T`` observations: max(1, ceil(sqrt(T)/4)).

    Computed in integers: the smallest n with 4n >= sqrt(T).
    """
    if T < 1:
        raise ValueError("need at least one observation")
    r = math.isqrt(T)
    ceil_sqrt = r if r * r == T else r + 1
    return max(1, -(-ceil_sqrt // 4))


def trial_weights(trials: Sequence | int, ramp_flat: int = 25) -> np.ndarray:
    """Age weights for trials ordered oldest to newest.

    The newest ``ramp_flat`` trials get weight 1; the ``m`` older ones ramp
    linearly as ``(i + 1) / m``.
    """
    T = trials if isinstance(trials, int) else len(trials)
    w = np.ones(T)
    m = T - ramp_flat
    if m > 0:
        w[:m] = np.arange(1, m + 1) / m
    return w


def split_best_rest(trials: Sequence) -> tuple[list, list]:
    """Partition ok trials into the ``n_best(T)`` lowest-loss ones and the rest.

    ``trials`` must be in birth order; ties in loss go to the earlier trial.
    ``best`` is sorted by rank, ``rest`` keeps the input order.
    """
    best, rest = _split_indices([t.loss for t in trials])
    return [trials[i] for i in best], [trials[i] for i in rest]


def _split_indices(losses):
    if not len(losses):
        raise ValueError("cannot split an empty history")
    order = sorted(range(len(losses)), key=lambda i: (losses[i], i))
    best = order[: n_best(len(losses))]
    chosen = set(best)
    return best, [i for i in range(len(losses)) if i not in chosen]


# -- densities -------------------------------------------------------------


@dataclass(frozen=True)
class ParzenDensity:
    """Weighted Gaussian mixture, truncated per component to ``[low, high]``.

    All quantities live in the fitting space: log-space for lognormal
    hyperparameters (``log_space=True``), the value itself otherwise.
    """

    centers: np.ndarray
    widths: np.ndarray
    weights: np.ndarray
    low: float | None = None
    high: float | None = None
    log_space: bool = False

    @property
    def bounded(self):
        return self.low is not None

    def _log_mass(self):
        if not self.bounded:
            return np.zeros_like(self.centers)
        a = (self.low - self.centers) / self.widths
        b = (self.high - self.centers) / self.widths
        return np.log(ndtr(b) - ndtr(a))

    def logpdf(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        z = (x[:, None] - self.centers) / self.widths
        comp = -0.5 * z**2 - _LOG_SQRT_2PI - np.log(self.widths) - self._log_mass()
        out = logsumexp(comp + np.log(self.weights), axis=1)
        if self.bounded:
            out = np.where((x < self.low) | (x > self.high), -np.inf, out)
        return out

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def sample(self, rng, n: int) -> np.ndarray:
        idx = rng.choice(len(self.weights), size=n, p=self.weights)
        c, w = self.centers[idx], self.widths[idx]
        if not self.bounded:
            return c + w * rng.standard_normal(n)
        a = ndtr((self.low - c) / w)
        b = ndtr((self.high - c) / w)
        u = a + (b - a) * rng.uniform(size=n)
        return np.clip(c + w * ndtri(u), self.low, self.high)

    def mode(self, grid=2001):
        lo = self.low if self.bounded else float(np.min(self.centers - 4 * self.widths))
        hi = self.high if self.bounded else float(np.max(self.centers + 4 * self.widths))
        xs = np.linspace(lo, hi, grid)
        return float(xs[np.argmax(self.logpdf(xs))])


@dataclass(frozen=True)
class CategoricalDensity:
    """Distribution over ``offset, offset + 1, ...`` (choice indices or integers)."""

    probs: np.ndarray
    offset: int = 0

    def logpmf(self, x) -> np.ndarray:
        idx = np.atleast_1d(np.asarray(x, dtype=int)) - self.offset
        return np.log(self.probs[idx])

    def sample(self, rng, n: int) -> np.ndarray:
        return rng.choice(len(self.probs), size=n, p=self.probs) + self.offset


def _prior_shape(node: ExprNode):
    """(center, width, low, high, log_space) of the prior in fitting space."""
    a, b = node.params
    if node.kind == "uniform":
        return (a + b) / 2.0, b - a, a, b, False
    if node.kind == "normal":
        return a, b, None, None, False
    if node.kind == "lognormal":
        return a, b, None, None, True
    raise ValueError(f"no Parzen density for {node.kind!r} nodes")


def fit_parzen(values, weights, prior_node: ExprNode, prior_weight: float = 1.0) -> ParzenDensity:
    """Adaptive-bandwidth Parzen density over observed values plus the prior.

    Each observation gets a component whose width is the larger of its gaps
    to the sorted neighbours (support bounds act as neighbours at the ends),
    clipped to ``[scale / 100, scale]`` where ``scale`` is the support width
    or, on unbounded supports, the prior's standard deviation.
    """
    values = np.asarray(values, dtype=float).ravel()
    weights = np.asarray(weights, dtype=float).ravel()
    if values.shape != weights.shape:
        raise ValueError(f"{len(values)} values but {len(weights)} weights")
    if np.any(weights <= 0):
        raise ValueError("weights must be positive")
    center, width, low, high, log_space = _prior_shape(prior_node)
    if log_space:
        if np.any(values <= 0):
            raise ValueError("lognormal values must be positive")
        values = np.log(values)
    if low is not None and np.any((values < low) | (values > high)):
        raise ValueError(f"values outside support [{low}, {high}]")

    order = np.argsort(values, kind="stable")
    xs = values[order]
    ws = weights[order]
    n = len(xs)
    widths = np.empty(n)
    scale = width
    for i in range(n):
        gaps = []
        if i > 0:
            gaps.append(xs[i] - xs[i - 1])
        elif low is not None:
            gaps.append(xs[i] - low)
        if i < n - 1:
            gaps.append(xs[i + 1] - xs[i])
        elif high is not None:
            gaps.append(high - xs[i])
        widths[i] = max(gaps) if gaps else scale
    widths = np.clip(widths, scale / 100.0, scale)

    centers = np.append(xs, center)
    widths = np.append(widths, width)
    w = np.append(ws, prior_weight)
    return ParzenDensity(centers, widths, w / w.sum(), low, high, log_space)


def fit_categorical(values, weights, prior_node: ExprNode, prior_weight: float = 1.0) -> CategoricalDensity:
    """Prior pseudo-count (spread uniformly) plus weighted observation counts."""
    if prior_node.kind == "choice":
        offset, size = 0, len(prior_node.children)
    elif prior_node.kind == "randint":
        offset, size = int(prior_node.params[0]), int(prior_node.params[1] - prior_node.params[0] + 1)
    else:
        raise ValueError(f"no categorical density for {prior_node.kind!r} nodes")
    values = np.asarray(values, dtype=int).ravel()
    weights = np.asarray(weights, dtype=float).ravel()
    if values.shape != weights.shape:
        raise ValueError(f"{len(values)} values but {len(weights)} weights")
    idx = values - offset
    if np.any((idx < 0) | (idx >= size)):
        raise ValueError("values outside the option range")
    counts = np.full(size, prior_weight / size)
    np.add.at(counts, idx, weights)
    return CategoricalDensity(counts / counts.sum(), offset)


# -- algorithms ------------------------------------------------------------


def suggest_random(graph: ExprGraph, snapshot, seed) -> Assignment:
    """Sample from the prior; the history is ignored."""
    return sample_prior(graph, np.random.default_rng(seed))


def _tpe_draw(node, history, config, rng, prior):
    label = node.label
    hist = [t for t in history if label in t.assignment]
    if not hist:
        return prior(node)
    weights = trial_weights(len(hist), config.ramp_flat)
    best, rest = _split_indices([t.loss for t in hist])

    def columns(idx):
        return [hist[i].assignment[label] for i in idx], weights[idx]

    categorical = node.kind in ("choice", "randint")
    fit = fit_categorical if categorical else fit_parzen
    good = fit(*columns(best), node, config.prior_weight)
    bad = fit(*columns(rest), node, config.prior_weight)

    cand = good.sample(rng, config.n_candidates)
    if categorical:
        score = good.logpmf(cand) - bad.logpmf(cand)
        return int(cand[int(np.argmax(score))])
    score = good.logpdf(cand) - bad.logpdf(cand)
    x = float(cand[int(np.argmax(score))])
    return math.exp(x) if good.log_space else x


def tpe_suggest(graph: ExprGraph, snapshot, config: HPOAConfig) -> Assignment:
    """Next configuration under TPE.

    Falls back to :func:`suggest_random` with the same seed while fewer than
    ``config.n_startup`` ok trials exist.  Labels never active in the
    history are drawn from their prior.
    """
    ok = [t for t in snapshot if t.status == "ok"]
    if all(t.born_order is not None for t in ok):
        ok.sort(key=lambda t: t.born_order)
    history = ok
    if len(history) < config.n_startup:
        return suggest_random(graph, snapshot, config.seed)
    rng = np.random.default_rng(config.seed)
    prior = _prior_draw(rng)
    return _walk(graph, lambda node: _tpe_draw(node, history, config, rng, prior))


def suggest(algo: str, graph: ExprGraph, snapshot, config: HPOAConfig) -> Assignment:
    if algo == "random":
        return suggest_random(graph, snapshot, config.seed)
    if algo == "tpe":
        return tpe_suggest(graph, snapshot, config)
    raise ValueError(f"unknown algorithm {algo!r}")
