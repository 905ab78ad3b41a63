"""Detecting a logarithmic correction.

The symbol exp(-|xi|**2 ln(e + 1/|xi|)) gives ||u(t)||_inf ~ (t ln t)**-1/2. Dividing by
the pure power t**-1/2 leaves a ratio that keeps drifting; dividing by the
full rate flattens it.
"""
import numpy as np

from nonlocal_lab.decayfit import DecayTarget, fit_decay, run_theorem_suite

res = run_theorem_suite("log_perturbed_+1")
with_log = res.report
power_only = fit_decay(res.table, DecayTarget(0.5), with_log.fit_window)

print("       t   power-only   with log")
for t, a, b in zip(with_log.times, power_only.compensated_ratios, with_log.compensated_ratios):
    print(f"{t:8.0f}  {a:11.5f}  {b:9.5f}")
print(f"spread: power-only {power_only.ratio_spread:.4f}, with log {with_log.ratio_spread:.4f}")
print("power-only drift monotone:", bool(np.all(np.diff(power_only.compensated_ratios) < 0)))
