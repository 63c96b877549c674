"""Train a prescriptive 0-1 network on simulated data and score it out of sample.

Run with ``python notebooks/prescription_demo.py``. Uses HiGHS when
``highspy`` is installed and the embedded solver (on a smaller problem)
otherwise.
"""
import numpy as np

from pnn import train
from pnn.evaluation import confidence_interval, oosp
from pnn.mip import SolverConfig, highs_available
from pnn.synthetic import SimSpec, simulate

solver = "highs" if highs_available() else "embedded"
n, width, limit = (100, 3, 20.0) if solver == "highs" else (12, 1, 30.0)

scores = []
for seed in range(3):
    tr = simulate(SimSpec(1, n, 0.5, seed))
    te = simulate(SimSpec(1, 10_000, 0.5, 1_000_000 + seed))
    res = train(tr.dataset, width=width, loss="dr", lam=0.01, solver=solver, config=SolverConfig(time_limit_s=limit))
    r = res.report()
    score = oosp(res.policy, te)
    scores.append(score)
    print(f"seed {seed}: status {r['status']}, gap {r['gap']:.3g}, OOSP {score:.2f}%, "
          f"always-treat {100 * te.correct_treatment.mean():.2f}%")

lo, hi = confidence_interval(scores)
print(f"mean OOSP {np.mean(scores):.2f}% (95% CI {lo:.2f} to {hi:.2f})")
