"""The trial store: resuming, concurrent workers and the report."""

import tempfile
from pathlib import Path

from spacetune import TrialStore, best_trial
from spacetune.bench import ExperimentConfig, report, run_experiment

tmp = Path(tempfile.mkdtemp())
db = tmp / "quad.jsonl"

cfg = ExperimentConfig("quad1d", "quad1d", algo="tpe", max_trials=40, seed=1, store=str(db), n_startup=10)
run_experiment(cfg)
print(len(TrialStore(db).snapshot()), "trials after the first run")

# rerunning continues where the store left off
run_experiment(ExperimentConfig("quad1d", "quad1d", algo="tpe", max_trials=80, seed=1, store=str(db), n_startup=10))
trials = TrialStore(db).snapshot()
print(len(trials), "trials after resuming; best", best_trial(trials).loss)

print(db.read_text().splitlines()[0])

# four workers share one file; born_order is assigned at append time
par = tmp / "branch.jsonl"
run_experiment(ExperimentConfig("branch2", "branch2", max_trials=100, workers=4, seed=0, store=str(par), n_startup=20))
trials = TrialStore(par).snapshot()
print("parallel run:", len(trials), "trials,", len({t.trial_id for t in trials}), "distinct ids")

lines = report(trials).splitlines()
print("\n".join(lines[:6]))
print("...")
print("\n".join(lines[-6:]))
