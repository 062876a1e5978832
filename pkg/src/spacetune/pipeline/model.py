"""Feed-forward feature pipelines and their classification loss.

A pipeline is zero or more inter-layers (fbncc then lpool), one outer layer
(fbncc then a pooling option) and a linear SVM.  The outer filter count is not
a hyperparameter: it is the largest count keeping the feature width within
``FEATURE_CAP``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .filters import STRATEGIES, FilterBank, generate_filters
from .ops import (
    DihistParams,
    FbnccParams,
    LnormParams,
    LpoolParams,
    PipelineError,
    dihist,
    fbncc,
    lnorm,
    lpool,
)
from .svm import train_linear_svm

logger = logging.getLogger(__name__)

__all__ = [
    "FEATURE_CAP",
    "POOLINGS",
    "FilterSpec",
    "FittedPipeline",
    "InterLayer",
    "OuterLayer",
    "PipelineConfig",
    "config_from_values",
    "evaluate_pipeline_loss",
    "extract_features",
    "features_per_filter",
    "fit_pipeline",
    "outer_filter_count",
    "predict_feature_width",
]

FEATURE_CAP = 16000
POOLINGS = ("lpool_lnorm", "dihist_grid", "dihist_box")


@dataclass(frozen=True)
class FilterSpec:
    strategy: str = "random_uniform"
    size: int = 3
    seed: int = 0
    count: int | None = None  # None on the outer layer: derived from the cap
    bandpass: float = 0.0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise PipelineError(f"unknown filter strategy {self.strategy!r}")
        if self.size < 2:
            raise PipelineError(f"filter size must be >= 2, got {self.size}")
        if self.count is not None and self.count < 1:
            raise PipelineError("filter count must be >= 1")


@dataclass(frozen=True)
class InterLayer:
    filters: FilterSpec
    norm: FbnccParams
    pool: LpoolParams


@dataclass(frozen=True)
class OuterLayer:
    filters: FilterSpec
    norm: FbnccParams
    pooling: str = "lpool_lnorm"
    lpool: LpoolParams | None = None
    lnorm: LnormParams | None = None
    dihist: DihistParams | None = None
    max_filters: int | None = None

    def __post_init__(self):
        if self.pooling not in POOLINGS:
            raise PipelineError(f"unknown pooling {self.pooling!r}")
        if self.pooling == "lpool_lnorm" and (self.lpool is None or self.lnorm is None):
            raise PipelineError("lpool_lnorm pooling needs lpool and lnorm parameters")
        if self.pooling != "lpool_lnorm":
            mode = self.pooling.split("_")[1]
            if self.dihist is None or self.dihist.mode != mode:
                raise PipelineError(f"{self.pooling} pooling needs dihist parameters in {mode} mode")


@dataclass(frozen=True)
class PipelineConfig:
    outer: OuterLayer
    inter_layers: tuple[InterLayer, ...] = ()
    C_reg: float = 1.0
    var_cutoff: float = 0.0
    grayscale: bool = False

    def __post_init__(self):
        object.__setattr__(self, "inter_layers", tuple(self.inter_layers))
        if len(self.inter_layers) > 2:
            raise PipelineError("at most two inter-layers")
        if any(layer.filters.count is None for layer in self.inter_layers):
            raise PipelineError("inter-layer filter counts must be given")
        if not self.C_reg > 0 or not self.var_cutoff >= 0:
            raise PipelineError("need C_reg > 0 and var_cutoff >= 0")


# -- shape algebra ---------------------------------------------------------


def _after(length, size, stride=1, what="stage"):
    if length < size:
        raise PipelineError(f"{what} of size {size} does not fit a map of side {length}")
    return (length - size) // stride + 1


def features_per_filter(dims, outer: OuterLayer) -> int:
    """Output features contributed by each outer filter, given the fbncc output dims."""
    H, W = dims
    if outer.pooling == "lpool_lnorm":
        lp, ln = outer.lpool, outer.lnorm
        h = _after(_after(H, lp.size, lp.stride, "lpool"), ln.size, 1, "lnorm")
        w = _after(_after(W, lp.size, lp.stride, "lpool"), ln.size, 1, "lnorm")
        return h * w
    dh = outer.dihist
    if outer.pooling == "dihist_grid":
        if dh.grid > min(H, W):
            raise PipelineError(f"{dh.grid}x{dh.grid} grid does not fit {H}x{W}")
        return dh.grid * dh.grid * 2
    return _after(H, dh.side, dh.subsample, "box") * _after(W, dh.side, dh.subsample, "box") * 2


def outer_filter_count(dims, outer: OuterLayer, cap: int = FEATURE_CAP) -> int:
    """Largest K with ``K * features_per_filter <= cap`` (and ``<= outer.max_filters``)."""
    per = features_per_filter(dims, outer)
    if per > cap:
        raise PipelineError(f"a single filter already yields {per} > {cap} features")
    k = cap // per
    if outer.max_filters is not None:
        k = min(k, outer.max_filters)
    return k


def _stage_dims(image_shape, config: PipelineConfig):
    """(H, W) entering the outer fbncc, and the outer fbncc output dims."""
    H, W = image_shape[:2]
    for layer in config.inter_layers:
        S = layer.filters.size
        H, W = _after(H, S, what="filter"), _after(W, S, what="filter")
        lp = layer.pool
        H, W = _after(H, lp.size, lp.stride, "lpool"), _after(W, lp.size, lp.stride, "lpool")
    S = config.outer.filters.size
    return (H, W), (_after(H, S, what="filter"), _after(W, S, what="filter"))


def predict_feature_width(image_shape, config: PipelineConfig, cap: int = FEATURE_CAP) -> int:
    _, dims = _stage_dims(image_shape, config)
    return features_per_filter(dims, config.outer) * outer_filter_count(dims, config.outer, cap)


# -- feature extraction ----------------------------------------------------


def _prepare(images, grayscale):
    x = np.asarray(images)
    if x.ndim == 3:
        x = x[..., None]
    if x.ndim != 4:
        raise PipelineError(f"expected (N, H, W, C) images, got {x.shape}")
    scale = 255.0 if x.dtype == np.uint8 else 1.0
    x = x.astype(np.float32) / np.float32(scale)
    if grayscale and x.shape[-1] == 3:
        x = x @ np.array([0.299, 0.587, 0.114], dtype=np.float32)
        x = x[..., None]
    return x


def _outer_pool(y, outer: OuterLayer):
    if outer.pooling == "lpool_lnorm":
        return lnorm(lpool(y, outer.lpool), outer.lnorm)
    return dihist(y, outer.dihist)


@dataclass
class FittedPipeline:
    config: PipelineConfig
    banks: list[FilterBank] = field(default_factory=list)
    batch_size: int = 50

    def _inter(self, x, upto):
        for layer, bank in zip(self.config.inter_layers[:upto], self.banks):
            x = lpool(fbncc(x, bank.filters, layer.norm), layer.pool)
        return x

    def transform(self, images) -> np.ndarray:
        """One flattened feature row per image."""
        x = _prepare(images, self.config.grayscale)
        rows = []
        n_inter = len(self.config.inter_layers)
        for start in range(0, len(x), self.batch_size):
            chunk = self._inter(x[start : start + self.batch_size], n_inter)
            y = fbncc(chunk, self.banks[-1].filters, self.config.outer.norm)
            rows.append(_outer_pool(y, self.config.outer).reshape(len(chunk), -1))
        return np.concatenate(rows) if rows else np.zeros((0, 0), np.float32)


def fit_pipeline(config: PipelineConfig, images, n_source: int = 200, cap: int = FEATURE_CAP) -> FittedPipeline:
    """Generate every layer's filter bank from (a prefix of) ``images``.

    ZCA strategies sample patches from the first ``n_source`` images as seen
    by that layer, i.e. after all earlier layers.
    """
    x = _prepare(images, config.grayscale)
    if x.shape[0] == 0:
        raise PipelineError("no images")
    _stage_dims(x.shape[1:], config)  # raise early on shape underflow
    fitted = FittedPipeline(config)
    source = x[:n_source]
    for layer in config.inter_layers:
        spec = layer.filters
        bank = generate_filters(
            spec.strategy, spec.count, spec.size, spec.seed, data=source, bandpass=spec.bandpass
        )
        fitted.banks.append(bank)
        source = lpool(fbncc(source, bank.filters, layer.norm), layer.pool)
    spec = config.outer.filters
    dims = (source.shape[1] - spec.size + 1, source.shape[2] - spec.size + 1)
    count = outer_filter_count(dims, config.outer, cap)
    fitted.banks.append(
        generate_filters(spec.strategy, count, spec.size, spec.seed, data=source, bandpass=spec.bandpass)
    )
    return fitted


def extract_features(images, config: PipelineConfig, fitted: FittedPipeline | None = None) -> np.ndarray:
    """Feature matrix for ``images``; filters are fitted on ``images`` unless given."""
    if fitted is None:
        fitted = fit_pipeline(config, images)
    return fitted.transform(images)


def evaluate_pipeline_loss(config: PipelineConfig, train, validation, max_iter: int = 300) -> float:
    """Validation error rate of ``config`` trained on ``train``.

    ``train`` and ``validation`` are ``(images, labels)`` pairs.  Stage errors
    propagate as :class:`PipelineError`; the experiment runner records them
    as failed trials.
    """
    train_x, train_y = train
    val_x, val_y = validation
    fitted = fit_pipeline(config, train_x)
    F_train = fitted.transform(train_x)
    if not np.all(np.isfinite(F_train)):
        raise PipelineError("non-finite training features")
    model = train_linear_svm(F_train, train_y, config.C_reg, config.var_cutoff, max_iter=max_iter)
    F_val = fitted.transform(val_x)
    err = model.error_rate(F_val, val_y)
    logger.debug("pipeline width=%d error=%.4f", F_train.shape[1], err)
    return err


# -- decoding from search-space values -------------------------------------


def _filter_spec(v, prefix, count=True):
    strategy = STRATEGIES[int(v[f"{prefix}_filters"])]
    return FilterSpec(
        strategy=strategy,
        size=int(v[f"{prefix}_size"]),
        seed=int(v.get(f"{prefix}_seed", 0)),
        count=int(v[f"{prefix}_K"]) if count else None,
        bandpass=float(v.get(f"{prefix}_bandpass", 0.0)),
    )


def _fbncc_params(v, prefix):
    return FbnccParams(
        beta=float(v[f"{prefix}_beta"]), rho=int(v[f"{prefix}_rho"]), eps=int(v[f"{prefix}_eps"])
    )


def config_from_values(resolved: Mapping, max_outer_filters: int | None = None) -> PipelineConfig:
    """Decode resolved statement values of the shipped vision spaces.

    Statement names follow a fixed convention: ``depth``, ``gray``,
    ``l1_*``/``l2_*`` for inter-layers, ``o_*`` for the outer layer, and
    ``C_reg``/``var_cutoff`` for the classifier.
    """
    v = resolved
    layers = []
    for i in range(1, int(v.get("depth", 0)) + 1):
        p = f"l{i}"
        layers.append(
            InterLayer(
                filters=_filter_spec(v, p),
                norm=_fbncc_params(v, p),
                pool=LpoolParams(
                    size=int(v[f"{p}_pool_size"]), stride=int(v[f"{p}_stride"]), p=float(v[f"{p}_p"])
                ),
            )
        )
    pooling = POOLINGS[int(v["o_pool"])]
    kwargs = {}
    if pooling == "lpool_lnorm":
        lp = LpoolParams(size=int(v["o_lp_size"]), stride=int(v["o_lp_stride"]), p=float(v["o_lp_p"]))
        kwargs["lpool"] = lp
        kwargs["lnorm"] = LnormParams(tau=float(v["o_tau"]), size=int(v.get("o_lnorm_size", lp.size)))
    elif pooling == "dihist_grid":
        kwargs["dihist"] = DihistParams(alpha=float(v["o_grid_alpha"]), mode="grid", grid=int(v["o_grid"]))
    else:
        kwargs["dihist"] = DihistParams(
            alpha=float(v["o_box_alpha"]),
            mode="box",
            subsample=int(v["o_box_sub"]),
            side=int(v["o_box_side"]),
        )
    outer = OuterLayer(
        filters=_filter_spec(v, "o", count=False),
        norm=_fbncc_params(v, "o"),
        pooling=pooling,
        max_filters=max_outer_filters,
        **kwargs,
    )
    return PipelineConfig(
        outer=outer,
        inter_layers=tuple(layers),
        C_reg=float(v["C_reg"]),
        var_cutoff=float(v.get("var_cutoff", 0.0)),
        grayscale=bool(int(v.get("gray", 0))),
    )
