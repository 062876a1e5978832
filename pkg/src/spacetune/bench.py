"""Loss registry, shipped search spaces, the experiment loop and reports."""

from __future__ import annotations

import csv
import io
import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

from .optimizers import HPOAConfig, suggest
from .searchspace import Assignment, ExprGraph, parse_space
from .trialdb import Trial, TrialStore, best_trial

logger = logging.getLogger(__name__)

__all__ = [
    "ExperimentConfig",
    "LossSpec",
    "builtin_losses",
    "convergence",
    "load_space",
    "report",
    "run_experiment",
    "shipped_spaces",
    "trial_seed",
]


def shipped_spaces() -> list[str]:
    return sorted(p.name[: -len(".space")] for p in resources.files("spacetune.spaces").iterdir()
                  if p.name.endswith(".space"))


def load_space(name_or_path) -> str:
    """DSL text of a shipped space (by name) or of a file on disk."""
    path = Path(name_or_path)
    if path.exists():
        return path.read_text(encoding="utf-8")
    res = resources.files("spacetune.spaces") / f"{name_or_path}.space"
    if res.is_file():
        return res.read_text(encoding="utf-8")
    raise FileNotFoundError(f"no space file or shipped space named {name_or_path!r}")


# -- losses ----------------------------------------------------------------


@dataclass(frozen=True)
class LossSpec:
    """A named loss over the configurations of one shipped space.

    ``fn`` maps an :class:`Assignment` to a real loss; it may raise to signal
    a failed evaluation.  ``setup``, if given, runs once before an experiment
    and should raise when the loss cannot be evaluated at all.
    """

    name: str
    fn: Callable[[Assignment], float]
    space: str
    labels: tuple[str, ...] = ()
    bindings: Mapping[str, Any] = field(default_factory=dict)
    setup: Callable[[], Any] | None = None

    def __call__(self, assignment: Assignment) -> float:
        return self.fn(assignment)


def quad1d(assignment: Assignment) -> float:
    return (assignment.resolved["x"] - 3.0) ** 2


def branch2(assignment: Assignment) -> float:
    u = assignment.resolved["branch"]
    if assignment.values["branch"] == 0:
        return (u - 3.0) ** 2 + 1.0
    return (u + 2.0) ** 2


@lru_cache(maxsize=2)
def _cifar_subsets(root, n_train, n_val, split_seed):
    from .pipeline.cifar import load_cifar10, stratified_split

    images, labels = load_cifar10(root)
    tr, va = stratified_split(labels, [n_train, n_val], split_seed)
    return (images[tr], labels[tr]), (images[va], labels[va])


class CifarDeskLoss:
    """Validation error of a decoded pipeline on a fixed stratified CIFAR-10 subset."""

    def __init__(self, n_train=2000, n_val=1000, split_seed=0, max_outer_filters=64, root=None):
        self.n_train = n_train
        self.n_val = n_val
        self.split_seed = split_seed
        self.max_outer_filters = max_outer_filters
        self.root = root

    def data(self):
        return _cifar_subsets(self.root, self.n_train, self.n_val, self.split_seed)

    def __call__(self, assignment: Assignment) -> float:
        from .pipeline.model import config_from_values, evaluate_pipeline_loss

        config = config_from_values(assignment.resolved, self.max_outer_filters)
        train, val = self.data()
        return evaluate_pipeline_loss(config, train, val)


def builtin_losses() -> dict[str, LossSpec]:
    desk = CifarDeskLoss()
    return {
        "quad1d": LossSpec("quad1d", quad1d, "quad1d", ("x",)),
        "branch2": LossSpec(
            "branch2", branch2, "branch2", ("branch", "branch.0.uniform", "branch.1.uniform")
        ),
        "cifar10-desk": LossSpec(
            "cifar10-desk",
            desk,
            "vision-desk",
            bindings={
                "n_train": desk.n_train,
                "n_val": desk.n_val,
                "split_seed": desk.split_seed,
                "max_outer_filters": desk.max_outer_filters,
            },
            setup=desk.data,
        ),
    }


# -- experiments -----------------------------------------------------------


def trial_seed(seed: int, ticket: int) -> int:
    """Per-trial seed from the experiment seed and the trial's sequence number."""
    return int(np.random.SeedSequence([seed, ticket]).generate_state(1)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    space: str
    loss: str
    algo: str = "tpe"
    max_trials: int = 100
    workers: int = 1
    seed: int = 0
    store: str | None = None
    n_startup: int = 50
    ramp_flat: int = 25
    n_candidates: int = 24

    def __post_init__(self):
        if self.max_trials < 1:
            raise ValueError("max_trials must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.algo not in ("random", "tpe"):
            raise ValueError(f"unknown algorithm {self.algo!r}")


def run_experiment(
    config: ExperimentConfig,
    store: TrialStore | None = None,
    losses: Mapping[str, LossSpec] | None = None,
) -> TrialStore:
    """Run suggest/evaluate/append loops until ``max_trials`` trials are finished.

    Resumable: finished (ok or fail) trials already in the store count
    towards ``max_trials``.  Trial ``n`` of an experiment always uses seed
    ``trial_seed(config.seed, n)``.
    """
    losses = builtin_losses() if losses is None else losses
    if config.loss not in losses:
        raise KeyError(f"unknown loss {config.loss!r}")
    loss = losses[config.loss]
    if loss.setup is not None:
        loss.setup()
    graph: ExprGraph = parse_space(load_space(config.space))
    if store is None:
        store = TrialStore(config.store)

    done = sum(t.status in ("ok", "fail") for t in store.snapshot())
    tickets = iter(range(done, config.max_trials))
    lock = threading.Lock()

    def work():
        while True:
            with lock:
                ticket = next(tickets, None)
            if ticket is None:
                return
            seed = trial_seed(config.seed, ticket)
            hp = HPOAConfig(
                seed=seed,
                n_startup=config.n_startup,
                ramp_flat=config.ramp_flat,
                n_candidates=config.n_candidates,
            )
            assignment = suggest(config.algo, graph, store.snapshot(), hp)
            notes = {"ticket": ticket, "algo": config.algo}
            start = time.perf_counter()
            try:
                value = float(loss(assignment))
                status = "ok" if math.isfinite(value) else "fail"
            except Exception as exc:  # any failure of the loss is a failed trial
                logger.warning("trial %d failed: %s", ticket, exc)
                value, status = None, "fail"
                notes["error"] = f"{type(exc).__name__}: {exc}"
            notes["wall_time"] = time.perf_counter() - start
            store.append(
                Trial(assignment.values, status, value if status == "ok" else None, seed, notes)
            )

    if config.workers == 1:
        work()
    else:
        with ThreadPoolExecutor(config.workers) as pool:
            for fut in [pool.submit(work) for _ in range(config.workers)]:
                fut.result()
    return store


# -- reports ---------------------------------------------------------------


def convergence(trials) -> list[tuple[int, float | None]]:
    """``(T, best ok loss among the first T trials)``; ``None`` before any ok trial."""
    if isinstance(trials, TrialStore):
        trials = trials.snapshot()
    rows = []
    best = None
    for T, t in enumerate(trials, start=1):
        if t.status == "ok" and (best is None or t.loss < best):
            best = t.loss
        rows.append((T, best))
    return rows


def report(trials) -> str:
    """Comma-separated convergence table, then the best trial's assignment."""
    if isinstance(trials, TrialStore):
        trials = trials.snapshot()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["T", "best_loss"])
    for T, best in convergence(trials):
        w.writerow([T, "" if best is None else repr(best)])
    top = best_trial(trials)
    if top is not None:
        w.writerow([])
        w.writerow(["label", "value"])
        w.writerow(["trial_id", top.trial_id])
        w.writerow(["loss", repr(top.loss)])
        for label, value in sorted(top.assignment.items()):
            w.writerow([label, repr(value)])
    return buf.getvalue()
