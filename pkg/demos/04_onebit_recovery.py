"""Sign measurements: only the direction of x is recoverable.

Run: python3 demos/04_onebit_recovery.py
"""

import numpy as np

from sublinear_gamp.baselines import BihtConfig, FistaConfig, biht, glasso, lambda_glasso_center
from sublinear_gamp.gamp import gamp_run
from sublinear_gamp.metrics import metric_normalized
from sublinear_gamp.model import Channel, Prior, ProblemDims, sample_matrix, sample_signal, trial_rng
from sublinear_gamp.sevo import se_run_finite

prior = Prior.gaussian(1.0)
channel = Channel.onebit(0.0)

for delta in (2.0, 4.0, 6.0):
    dims = ProblemDims(4096, 16, delta)
    scores = {"gamp": [], "biht": [], "glasso": []}
    for trial in range(10):
        rng = trial_rng(7, 0, trial)
        truth = sample_signal(dims, prior, rng)
        A = sample_matrix(dims, rng)
        y = channel.apply(A @ truth.x, rng)
        scores["gamp"].append(gamp_run(A, y, channel, prior, dims, T=20, truth=truth).nse[-1])
        scores["biht"].append(metric_normalized(biht(A, y, BihtConfig(dims.k, 20)), truth.x))
        lam = lambda_glasso_center(dims.M, dims.N)
        scores["glasso"].append(metric_normalized(glasso(A, y, FistaConfig(lam, max_iters=20)).x, truth.x))
    predicted = se_run_finite(channel, prior, dims.delta_eff, dims.N, dims.k, T=20)[-1]
    medians = "  ".join(f"{name} {np.median(v):.3e}" for name, v in scores.items())
    print(f"delta={delta:g}  median normalized error: {medians}   finite-N SE {predicted:.3e}")
