"""State evolution on the linear and sign channels.

Run: python3 demos/01_state_evolution.py
"""

from sublinear_gamp.model import Channel, Prior, snr_db_to_sigma2
from sublinear_gamp.sevo import (
    count_fixed_points,
    exit_chart,
    prop1_threshold,
    reconstruction_threshold,
    se_run,
    weak_reconstruction_threshold,
)

gauss = Prior.gaussian(1.0)
linear = Channel.linear(snr_db_to_sigma2(40))
onebit = Channel.onebit(0.0)

# The recursion tracks the unnormalized error v_in.  Its limit collapses once
# delta passes the weak threshold, where the chart keeps a single crossing.
print("linear channel, 40 dB, Gaussian nonzeros")
for delta in (0.2, 0.3, 0.5, 1.0, 1.5):
    tr = se_run(linear, gauss, delta)
    print(f"  delta={delta:4.2f}  v_in limit={tr.v_in_limit:.3e}  fixed points={tr.fixed_point_count}")
weak = weak_reconstruction_threshold(linear, gauss, 0.05, 20.0)
print(f"  weak threshold delta_w* = {weak.value:.4f}")

# Exact recovery needs a much larger delta: the limit must fall below 1e-8.
strong = reconstruction_threshold(linear, gauss, 0.5, 50.0)
print(f"  reconstruction threshold delta* = {strong.value:.3f}")

# For the worst constant-amplitude signal the threshold has a closed form.
const = Prior.constant(1.0)
for sigma2 in (0.0, 0.25):
    th = reconstruction_threshold(Channel.linear(sigma2), const, 0.5, 10.0)
    print(f"  |U| = 1, sigma2={sigma2:g}: bisection {th.value:.4f}, closed form {prop1_threshold(1.0, sigma2):.4f}")

# Sign measurements keep a positive fixed point next to the origin, so the
# error shrinks with delta but never reaches zero.
print("sign channel, noiseless")
for delta in (1.0, 2.0, 4.0, 8.0):
    tr = se_run(onebit, gauss, delta)
    chart = exit_chart(onebit, gauss, delta)
    print(f"  delta={delta:3.1f}  v_in limit={tr.v_in_limit:.3e}  fixed points={count_fixed_points(chart)}")
