# A fixed-length window slid through the sample.
#
# Each step adds the newest point and deletes the oldest. Deletion is a
# downdate (hyperbolic rotations), so nothing is refactorized from scratch.
# The estimate is checked against a refit on the same window, and a point is
# added and retracted to show the state comes back.

import numpy as np

from tvpsur.bench import ScenarioSpec, default_noise, simulate_tvp_sur
from tvpsur.estimator import fit, open_window, retract_latest, roll_window

spec = ScenarioSpec(G=2, K=6, seed=3)
noise = default_noise(2, 3)
data = simulate_tvp_sur(spec, noise, T=60)
w = 25

ws = open_window(data.window(0, w), noise)
for j in range(1, data.t - w + 1):
    est, ws = roll_window(ws, data.rows_at(w + j - 1), [data.rows_at(j - 1)])
    if j % 7 == 0:
        ref, _ = fit(data.window(j, j + w), noise)
        print(f"window {j + 1}..{j + w}: max diff from refit {np.abs(est.vector - ref.vector).max():.2e}")

before = ws.estimate()
extra = [(np.ones(3), 0.5), (np.ones(3), -0.5)]
_, grown = roll_window(ws, extra)
after, _ = retract_latest(grown, extra)
print("add then retract, max change:", np.abs(after.vector - before.vector).max())
