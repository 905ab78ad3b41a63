"""Poisson-weighted sums track their coefficients.

For R(k) = k**beta L(k) the weighted sum exp(-t) sum_{k>=N} t**k/k! R(k)
behaves like R(t) for large t. We print the ratio sum/R(t) on a log grid
and watch it settle toward 1, slowly when L carries a logarithm.
"""
import numpy as np

from nonlocal_lab.regvar import RegVarying, SlowVarying
from nonlocal_lab.xseries import SeriesSpec, verify_series_asymptotics

t = np.geomspace(1e2, 1e4, 9)
cases = {
    "k^-1/2": RegVarying(-0.5),
    "k^-1 ln k": RegVarying(-1.0, SlowVarying.iterlog(1.0)),
    "1/ln k": RegVarying(0.0, SlowVarying.iterlog(-1.0)),
}

print("t".rjust(10) + "".join(name.rjust(14) for name in cases))
results = {name: verify_series_asymptotics(SeriesSpec(1.0, 3, R), t) for name, R in cases.items()}
for i, ti in enumerate(t):
    print(f"{ti:10.0f}" + "".join(f"{r.ratios[i]:14.6f}" for r in results.values()))

for name, r in results.items():
    print(f"{name}: verdict {r.verdict}, top-decade spread {r.top_decade_spread:.5f}")
