import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, title = marker.args
    if rep.when == "call" or rep.failed:
        prev = _criteria.get(n, (title, "passed"))[1]
        _criteria[n] = (title, "failed" if rep.failed or prev == "failed" else rep.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(_criteria):
        title, outcome = _criteria[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if outcome == 'passed' else 'FAIL'}  {title}")


def make_images(n, seed, n_classes=10):
    """Small learnable image set: each class has its own colour cast and stripe."""
    import numpy as np

    rng = np.random.default_rng(seed)
    labels = np.arange(n) % n_classes
    rng.shuffle(labels)
    base = rng.uniform(60, 200, size=(n_classes, 3))
    images = rng.normal(128, 30, size=(n, 32, 32, 3))
    images += (base[labels] - 128)[:, None, None, :]
    for c in range(n_classes):
        images[labels == c, 3 * c : 3 * c + 3, :, :] += 60
    return np.clip(images, 0, 255).astype(np.uint8), labels.astype(np.uint8)


@pytest.fixture(scope="session")
def synthetic_cifar(tmp_path_factory):
    """A directory of CIFAR-10-format binary batches with learnable content."""
    from spacetune.pipeline import write_cifar_batch

    root = tmp_path_factory.mktemp("cifar") / "cifar-10-batches-bin"
    root.mkdir()
    for i in range(1, 3):
        write_cifar_batch(root / f"data_batch_{i}.bin", *make_images(300, seed=i))
    write_cifar_batch(root / "test_batch.bin", *make_images(100, seed=9))
    return root.parent
