import json
import math
import multiprocessing as mp
import threading

import pytest
from hypothesis import given, settings, strategies as st

from spacetune.bench import convergence
from spacetune.trialdb import StoreError, Trial, TrialStore, append_trial, best_trial, snapshot


def ok(loss, **values):
    return Trial(values or {"x": loss}, "ok", loss, seed=1)


@pytest.fixture(params=["memory", "file"])
def store(request, tmp_path):
    return TrialStore(tmp_path / "trials.jsonl" if request.param == "file" else None)


class TestAppend:
    def test_single(self, store):
        assert append_trial(store, ok(0.5)) == 0
        assert len(snapshot(store)) == 1

    def test_rejects_nan_ok(self, store):
        with pytest.raises(ValueError, match="finite"):
            store.append(ok(math.nan))
        assert snapshot(store) == ()

    def test_rejects_loss_on_failed(self, store):
        with pytest.raises(ValueError):
            store.append(Trial({}, "fail", 0.3))

    def test_rejects_unknown_status(self, store):
        with pytest.raises(ValueError, match="status"):
            store.append(Trial({}, "done", 0.3))

    def test_born_order_and_ids(self, store):
        ids = store.extend([ok(0.3), Trial({}, "fail"), ok(0.1)])
        assert ids == [0, 1, 2]
        assert [t.born_order for t in store.snapshot()] == [0, 1, 2]


class TestSnapshot:
    def test_empty(self, store):
        assert snapshot(store) == ()

    def test_order(self, store):
        store.extend([ok(0.3), ok(0.2), ok(0.1)])
        assert [t.loss for t in snapshot(store)] == [0.3, 0.2, 0.1]

    def test_isolation(self, store):
        store.extend([ok(0.3), ok(0.2)])
        snap = snapshot(store)
        store.append(ok(0.1))
        assert len(snap) == 2
        assert len(snapshot(store)) == 3

    def test_trials_are_read_only(self, store):
        store.append(ok(0.3))
        t = snapshot(store)[0]
        with pytest.raises(TypeError):
            t.assignment["x"] = 1.0
        with pytest.raises(AttributeError):
            t.loss = 1.0


class TestBest:
    def test_min(self, store):
        store.extend([ok(0.5), ok(0.2), ok(0.9)])
        assert best_trial(store).loss == 0.2

    def test_tie_goes_to_earlier(self, store):
        store.extend([ok(0.2, x=1), ok(0.2, x=2)])
        assert best_trial(store).born_order == 0

    def test_all_failed(self, store):
        store.extend([Trial({}, "fail"), Trial({}, "fail")])
        assert best_trial(store) is None


class TestFile:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "t.jsonl"
        st_ = TrialStore(path)
        st_.extend(
            [
                Trial({"a": 0.1, "b": 2}, "ok", 0.25, seed=7, annotations={"wall_time": 1.5}),
                Trial({"a": -3.0}, "fail", seed=8, annotations={"error": "boom"}),
                Trial({}, "pending", seed=9),
            ]
        )
        assert TrialStore(path).snapshot() == st_.snapshot()

    def test_record_schema(self, tmp_path):
        path = tmp_path / "t.jsonl"
        TrialStore(path).append(Trial({"x": 1.5}, "ok", 0.5, seed=3))
        TrialStore(path).append(Trial({"x": 2}, "fail", seed=4))
        lines = path.read_text(encoding="utf-8").splitlines()
        first, second = map(json.loads, lines)
        assert first == {
            "trial_id": 0,
            "born_order": 0,
            "status": "ok",
            "seed": 3,
            "loss": 0.5,
            "assignment": {"x": 1.5},
            "annotations": {},
        }
        assert "loss" not in second and second["born_order"] == 1

    def test_partial_trailing_record_ignored(self, tmp_path):
        path = tmp_path / "t.jsonl"
        TrialStore(path).append(ok(0.5))
        with open(path, "a") as fh:
            fh.write('{"trial_id": 1, "born_or')
        assert len(TrialStore(path).snapshot()) == 1

    def test_corrupt_record(self, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text("not json\n")
        with pytest.raises(StoreError, match="corrupt"):
            TrialStore(path).snapshot()

    def test_two_handles_see_each_other(self, tmp_path):
        path = tmp_path / "t.jsonl"
        a, b = TrialStore(path), TrialStore(path)
        a.append(ok(0.5))
        b.append(ok(0.4))
        assert [t.born_order for t in a.snapshot()] == [0, 1]


def _append_many(path, worker, n):
    store = TrialStore(path)
    for i in range(n):
        store.append(Trial({"worker": worker, "i": i}, "ok", float(i), seed=worker))


def test_concurrent_processes(tmp_path):
    path = tmp_path / "t.jsonl"
    ctx = mp.get_context("fork")
    procs = [ctx.Process(target=_append_many, args=(path, w, 50)) for w in range(4)]
    for p in procs:
        p.start()
    for p in procs:
        p.join()
        assert p.exitcode == 0
    trials = TrialStore(path).snapshot()
    assert len({t.trial_id for t in trials}) == 200
    assert {(t.assignment["worker"], t.assignment["i"]) for t in trials} == {
        (w, i) for w in range(4) for i in range(50)
    }


def test_concurrent_threads_shared_handle(tmp_path):
    store = TrialStore(tmp_path / "t.jsonl", fsync=False)
    threads = [
        threading.Thread(target=lambda w=w: [store.append(ok(float(i), w=w, i=i)) for i in range(100)])
        for w in range(4)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len({t.trial_id for t in TrialStore(store.path).snapshot()}) == 400


@settings(max_examples=100, deadline=None)
@given(st.lists(st.one_of(st.none(), st.floats(0, 10, allow_nan=False)), min_size=1, max_size=40))
def test_best_so_far_monotone(losses):
    store = TrialStore()
    for v in losses:
        store.append(Trial({}, "fail") if v is None else ok(v))
    bests = [b for _, b in convergence(store) if b is not None]
    assert all(x >= y for x, y in zip(bests, bests[1:]))
    ok_losses = [v for v in losses if v is not None]
    if ok_losses:
        assert bests[-1] == min(ok_losses) == best_trial(store).loss
