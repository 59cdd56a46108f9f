"""How slowly the spike-and-slab error approaches its sublinear limit.

Run: python3 demos/02_finite_size.py
"""

import numpy as np

from sublinear_gamp.model import Channel, Prior
from sublinear_gamp.sevo import lemma1_asymptote, lemma1_curve, se_run, se_run_finite

gauss = Prior.gaussian(1.0)
grid = [10, 20, 50, 100, 200, 500, 1000]

# Expected error of the Bayes denoiser with k = N^0.25 against the limit
# E[U^2 1(U^2 < 2 v)].  The gap closes roughly like 1 / log N.
print("log2N " + " ".join(f"{n:>9d}" for n in grid) + "     limit")
for v in (0.5, 1.0, 2.0):
    curve = lemma1_curve(gauss, v, 0.25, grid)
    print(f"v={v:<4g}" + " ".join(f"{c:9.4f}" for c in curve) + f"  {lemma1_asymptote(gauss, v):8.4f}")

# At desk scale (N = 4096, k = 16) the finite-N recursion is the better
# predictor of Monte Carlo GAMP than the limit.
onebit = Channel.onebit(0.0)
print("\nsign channel, N = 4096, k = 16")
for delta in (2.0, 4.0, 6.0):
    finite = se_run_finite(onebit, gauss, delta, 4096, 16, T=20)[-1]
    limit = se_run(onebit, gauss, delta).v_in_limit
    print(f"  delta={delta:g}: finite-N SE {finite:.3e}   sublinear limit {limit:.3e}   ratio {finite / limit:6.1f}")
print("  N = 2^40:", np.round(se_run_finite(onebit, gauss, 2.0, 2**40, 2**10, T=40)[-1], 4))
