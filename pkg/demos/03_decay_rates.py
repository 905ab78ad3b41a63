"""Decay of the nonlocal diffusion flow for the built-in scenarios.

Each scenario evolves a Gaussian bump under u_t = J*u - u, tracks the sup
norm on a geometric time grid and fits the predicted rate t**-beta L(t).
The compensated ratio norm/rate stays within a factor of two when the
prediction is right.
"""
from nonlocal_lab.decayfit import SCENARIOS, run_theorem_suite

skip = {"stable_0.5"}  # the slowest one; run it by name if you want it
print(f"{'scenario':20s} {'expected':>9s} {'fitted':>9s} {'spread':>8s}  verdict")
for name in SCENARIOS:
    if name in skip:
        continue
    rep = run_theorem_suite(name).report
    print(f"{name:20s} {rep.expected_exponent:9.4f} {rep.fitted_exponent:9.4f} "
          f"{rep.ratio_spread:8.4f}  {rep.verdict}")
