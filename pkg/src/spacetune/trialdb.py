"""Append-only trial history, optionally backed by a JSON-lines file.

Every record is one line::

    {"trial_id": 0, "born_order": 0, "status": "ok", "seed": 17,
     "loss": 0.25, "assignment": {"x": 1.5}, "annotations": {"wall_time": 0.1}}

Writers serialize through an OS-level file lock, so several processes (or
threads) may append to the same file.  Readers never take the lock: a
trailing line without its newline is an append in progress and is ignored.
"""

from __future__ import annotations

import json
import math
import os
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from types import MappingProxyType
from typing import Any, Iterable, Mapping

from filelock import FileLock

__all__ = [
    "STATUSES",
    "StoreError",
    "Trial",
    "TrialStore",
    "append_trial",
    "best_trial",
    "snapshot",
]

STATUSES = ("pending", "ok", "fail")


class StoreError(RuntimeError):
    """Storage failure or a corrupt record."""


@dataclass(frozen=True)
class Trial:
    """One evaluated configuration.

    ``trial_id`` and ``born_order`` are stamped by the store on append and
    are ``None`` on trials that have not been recorded yet.
    """

    assignment: Mapping[str, float | int]
    status: str
    loss: float | None = None
    seed: int = 0
    annotations: Mapping[str, Any] = field(default_factory=dict)
    trial_id: int | None = None
    born_order: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "assignment", MappingProxyType(dict(self.assignment)))
        object.__setattr__(self, "annotations", MappingProxyType(dict(self.annotations)))

    def check(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if self.status == "ok":
            if self.loss is None or not math.isfinite(self.loss):
                raise ValueError(f"ok trial needs a finite loss, got {self.loss!r}")
        elif self.loss is not None:
            raise ValueError(f"{self.status} trial must not carry a loss")

    def to_record(self) -> dict:
        rec = {
            "trial_id": self.trial_id,
            "born_order": self.born_order,
            "status": self.status,
            "seed": self.seed,
            "assignment": dict(self.assignment),
            "annotations": dict(self.annotations),
        }
        if self.loss is not None:
            rec["loss"] = self.loss
        return rec

    @classmethod
    def from_record(cls, rec: Mapping) -> "Trial":
        return cls(
            assignment=rec["assignment"],
            status=rec["status"],
            loss=rec.get("loss"),
            seed=rec["seed"],
            annotations=rec.get("annotations", {}),
            trial_id=rec["trial_id"],
            born_order=rec["born_order"],
        )

    def __eq__(self, other):
        if not isinstance(other, Trial):
            return NotImplemented
        return self.to_record() == other.to_record()

    __hash__ = None


class TrialStore:
    """Ordered, append-only collection of :class:`Trial`.

    Parameters
    ----------
    path : str or Path, optional
        JSON-lines backing file.  Created on first append; existing records
        are loaded lazily.  ``None`` keeps the store in memory.
    fsync : bool
        Flush every append to disk before returning.
    """

    def __init__(self, path=None, fsync=True):
        self.path = Path(path) if path is not None else None
        self.fsync = fsync
        self._trials: list[Trial] = []
        self._offset = 0
        self._mutex = threading.Lock()
        self._flock = FileLock(str(self.path) + ".lock") if self.path is not None else None

    def __repr__(self):
        return f"TrialStore({str(self.path) if self.path else None!r})"

    def __len__(self):
        return len(self.snapshot())

    # -- reading

    def _refresh(self):
        """Pull complete records appended since the last read."""
        if self.path is None or not self.path.exists():
            return
        try:
            with open(self.path, "rb") as fh:
                fh.seek(self._offset)
                chunk = fh.read()
        except OSError as exc:
            raise StoreError(f"cannot read {self.path}: {exc}") from exc
        end = chunk.rfind(b"\n")
        if end < 0:
            return
        for lineno, line in enumerate(chunk[: end + 1].splitlines()):
            if not line.strip():
                continue
            try:
                trial = Trial.from_record(json.loads(line))
            except (ValueError, KeyError, TypeError) as exc:
                raise StoreError(
                    f"corrupt record in {self.path} at byte {self._offset}: {exc}"
                ) from exc
            if self._trials and trial.born_order <= self._trials[-1].born_order:
                raise StoreError(f"born_order not increasing in {self.path}")
            self._trials.append(trial)
        self._offset += end + 1

    def snapshot(self) -> tuple[Trial, ...]:
        """Immutable, born_order-sorted copy of every complete record."""
        with self._mutex:
            self._refresh()
            return tuple(self._trials)

    # -- writing

    def append(self, trial: Trial) -> int:
        """Record ``trial`` and return its new ``trial_id``."""
        trial.check()
        with self._mutex:
            if self._flock is None:
                n = len(self._trials)
                self._trials.append(replace(trial, trial_id=n, born_order=n))
                return n
            with self._flock:
                self._refresh()
                n = self._trials[-1].born_order + 1 if self._trials else 0
                stamped = replace(trial, trial_id=n, born_order=n)
                line = (json.dumps(stamped.to_record(), sort_keys=True) + "\n").encode("utf-8")
                try:
                    self.path.parent.mkdir(parents=True, exist_ok=True)
                    fd = os.open(self.path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
                    try:
                        os.write(fd, line)
                        if self.fsync:
                            os.fsync(fd)
                    finally:
                        os.close(fd)
                except OSError as exc:
                    raise StoreError(f"cannot append to {self.path}: {exc}") from exc
                self._trials.append(stamped)
                self._offset += len(line)
                return n

    def extend(self, trials: Iterable[Trial]) -> list[int]:
        return [self.append(t) for t in trials]


def append_trial(store: TrialStore, trial: Trial) -> int:
    return store.append(trial)


def snapshot(store: TrialStore) -> tuple[Trial, ...]:
    return store.snapshot()


def best_trial(trials) -> Trial | None:
    """Lowest-loss ok trial; earliest born_order wins ties."""
    if isinstance(trials, TrialStore):
        trials = trials.snapshot()
    ok = [t for t in trials if t.status == "ok"]
    if not ok:
        return None
    return min(ok, key=lambda t: (t.loss, t.born_order))
