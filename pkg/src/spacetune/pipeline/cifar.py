"""CIFAR-10 binary batches and stratified subsets.

A batch file holds records of 3073 bytes: one label byte followed by the
red, green and blue 32x32 planes, row-major.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

__all__ = [
    "DATA_ENV",
    "RECORD_BYTES",
    "find_cifar10",
    "load_cifar10",
    "read_cifar_batch",
    "stratified_split",
    "to_gray",
    "write_cifar_batch",
]

DATA_ENV = "SPACETUNE_DATA"
RECORD_BYTES = 1 + 3 * 32 * 32
TRAIN_BATCHES = [f"data_batch_{i}.bin" for i in range(1, 6)]
TEST_BATCH = "test_batch.bin"
LUMA = np.array([0.299, 0.587, 0.114])


class DataError(OSError):
    """Dataset missing or malformed."""


def read_cifar_batch(path) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(images, labels)``: uint8 ``(N, 32, 32, 3)`` and uint8 ``(N,)``."""
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0 or raw.size % RECORD_BYTES:
        raise DataError(f"{path}: size {raw.size} is not a multiple of {RECORD_BYTES}")
    rec = raw.reshape(-1, RECORD_BYTES)
    labels = rec[:, 0].copy()
    if labels.max() > 9:
        raise DataError(f"{path}: label byte out of range")
    images = rec[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1).copy()
    return images, labels


def write_cifar_batch(path, images, labels):
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    planes = images.transpose(0, 3, 1, 2).reshape(len(images), -1)
    np.concatenate([labels[:, None], planes], axis=1).tofile(path)


def find_cifar10(root=None) -> Path:
    """Locate the directory holding ``data_batch_*.bin``.

    ``root`` defaults to ``$SPACETUNE_DATA``; both ``root`` itself and
    ``root/cifar-10-batches-bin`` are searched.
    """
    root = root or os.environ.get(DATA_ENV)
    if not root:
        raise DataError(f"no dataset root: set ${DATA_ENV}")
    for cand in (Path(root), Path(root) / "cifar-10-batches-bin"):
        if (cand / TRAIN_BATCHES[0]).exists():
            return cand
    raise DataError(f"no CIFAR-10 binary batches under {root}")


def load_cifar10(root=None, test=False):
    """Concatenate the five training batches (or the test batch)."""
    base = find_cifar10(root)
    names = [TEST_BATCH] if test else [n for n in TRAIN_BATCHES if (base / n).exists()]
    parts = [read_cifar_batch(base / n) for n in names]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def stratified_split(labels, sizes, seed) -> list[np.ndarray]:
    """Disjoint index sets with (as near as possible) equal class proportions.

    ``sizes`` lists the total size of each subset; each subset takes
    ``size // n_classes`` per class plus leftovers on the lowest classes.
    """
    labels = np.asarray(labels)
    classes = np.unique(labels)
    rng = np.random.default_rng(seed)
    pools = {c: rng.permutation(np.flatnonzero(labels == c)) for c in classes}
    used = {c: 0 for c in classes}
    out = []
    for size in sizes:
        per, extra = divmod(size, len(classes))
        idx = []
        for r, c in enumerate(classes):
            take = per + (1 if r < extra else 0)
            if used[c] + take > len(pools[c]):
                raise DataError(f"class {c} has too few examples for the requested split")
            idx.append(pools[c][used[c] : used[c] + take])
            used[c] += take
        out.append(np.sort(np.concatenate(idx)))
    return out


def to_gray(images) -> np.ndarray:
    """Luma conversion of ``(..., 3)`` images to ``(..., 1)``."""
    return (np.asarray(images, dtype=np.float64) @ LUMA)[..., None]
