"""TPE against random search on a conditional toy loss.

branch2 picks one of two branches, each with its own uniform(-5, 5)
variable.  Branch 0 can never go below 1; branch 1 reaches 0 at u = -2.
"""

import numpy as np
from scipy import stats

from spacetune.bench import ExperimentConfig, convergence, run_experiment

reps, trials = 10, 150
best = {"random": [], "tpe": []}
curves = {}
for rep in range(reps):
    for algo in best:
        store = run_experiment(ExperimentConfig("branch2", "branch2", algo=algo, max_trials=trials, seed=rep))
        curve = [b for _, b in convergence(store)]
        best[algo].append(curve[-1])
        curves.setdefault(algo, []).append(curve)

for algo, values in best.items():
    print(f"{algo:>6}: median best {np.median(values):.2e}  ({', '.join(f'{v:.1e}' for v in values)})")

# random search has a closed-form best-loss distribution:
# P(best <= y) = 1 - (1 - sqrt(y) / 10) ** n
closed = (10 * (1 - 0.5 ** (1 / trials))) ** 2
print(f"closed-form random median: {closed:.2e}")

wins = sum(t < r for t, r in zip(best["tpe"], best["random"]))
print(f"TPE better in {wins}/{reps} paired runs, sign test p = "
      f"{stats.binomtest(wins, reps, 0.5, alternative='greater').pvalue:.4f}")

print("\nmedian best-so-far by trial count")
print("   T    random       tpe")
for T in (10, 25, 50, 75, 100, 150):
    r = np.median([c[T - 1] for c in curves["random"]])
    t = np.median([c[T - 1] for c in curves["tpe"]])
    print(f"{T:4d}  {r:9.2e} {t:9.2e}")
# TPE runs as random search for its first 50 trials, so the two columns agree until then
