"""A one-layer image feature pipeline on synthetic CIFAR-shaped data.

Set SPACETUNE_DATA to a CIFAR-10 binary directory to use real images instead.
"""

import os
import time

import numpy as np

from spacetune.pipeline import (
    DihistParams,
    FbnccParams,
    FilterSpec,
    InterLayer,
    LnormParams,
    LpoolParams,
    OuterLayer,
    PipelineConfig,
    evaluate_pipeline_loss,
    fbncc,
    generate_filters,
    load_cifar10,
    predict_feature_width,
    stratified_split,
)

if os.environ.get("SPACETUNE_DATA"):
    images, labels = load_cifar10()
else:
    rng = np.random.default_rng(0)
    labels = rng.permutation(np.arange(3000) % 10).astype(np.uint8)
    tint = rng.uniform(118, 138, size=(10, 3))
    images = rng.normal(128, 60, size=(3000, 32, 32, 3)) + (tint[labels] - 128)[:, None, None, :]
    for c in range(10):
        images[labels == c, 3 * c : 3 * c + 3] += 12  # a faint class-specific stripe
    images = np.clip(images, 0, 255).astype(np.uint8)

train_idx, val_idx = stratified_split(labels, [2000, 1000], seed=0)
train = images[train_idx], labels[train_idx]
val = images[val_idx], labels[val_idx]

# three ways to make filters
x = train[0][:100].astype(np.float32) / 255
for strategy in ("random_uniform", "zca_projection", "zca_patches"):
    bank = generate_filters(strategy, 8, 5, seed=1, data=x, bandpass=0.01)
    norms = np.linalg.norm(bank.filters.reshape(8, -1), axis=1)
    print(f"{strategy:>15}: {bank.shape}, norms {norms.min():.3f}..{norms.max():.3f}")

out = fbncc(x[:1], bank.filters, FbnccParams(beta=1.0, rho=0, eps=1))
print("fbncc output", out.shape, "range", out.min().round(3), out.max().round(3))

norm = FbnccParams(beta=1.0, rho=1, eps=1)
configs = {
    "grid histogram": PipelineConfig(
        OuterLayer(FilterSpec("zca_patches", 5, seed=2, bandpass=0.01), norm, "dihist_grid",
                   dihist=DihistParams(alpha=0.1, grid=3), max_filters=64),
        C_reg=1.0,
    ),
    "lpool + lnorm": PipelineConfig(
        OuterLayer(FilterSpec("random_uniform", 5, seed=2), norm, "lpool_lnorm",
                   lpool=LpoolParams(8, 4, 2.0), lnorm=LnormParams(1.0, 3), max_filters=64),
        C_reg=1.0,
    ),
    "two stage": PipelineConfig(
        OuterLayer(FilterSpec("zca_projection", 3, seed=4, bandpass=0.1), norm, "dihist_box",
                   dihist=DihistParams(alpha=0.05, mode="box", subsample=3, side=6), max_filters=64),
        inter_layers=(InterLayer(FilterSpec("random_uniform", 3, seed=3, count=16), norm, LpoolParams(2, 2, 2.0)),),
        C_reg=0.5,
    ),
}
for name, cfg in configs.items():
    width = predict_feature_width((32, 32), cfg)
    t = time.perf_counter()
    err = evaluate_pipeline_loss(cfg, train, val)
    print(f"{name:>15}: {width:5d} features, validation accuracy {1 - err:.3f} ({time.perf_counter() - t:.1f}s)")
