"""Sup norms of convolution powers.

A box kernel has finite variance, so ||J_k||_inf falls like k**-1/2 and
stays under the sharp Young bound. A Cauchy kernel (stable, sigma = 1) is
its own scaling family and falls like 1/k.
"""
import numpy as np

from nonlocal_lab.kernels import k_max, make_kernel, power_norms, sharp_young_bound

box = make_kernel("box", M=2**15, dx=1 / 63)
ks = np.unique(np.geomspace(1, 1024, 11).astype(int))
sup = power_norms(box, ks)
print("box kernel")
print("    k      sup_norm    young_bound")
for k, s in zip(ks, sup):
    print(f"{k:5d}  {s:12.6f}  {sharp_young_bound(box, int(k)).bound:12.6f}")
slope = np.polyfit(np.log(ks[ks >= 64]), np.log(sup[ks >= 64]), 1)[0]
print(f"log-log slope over k >= 64: {slope:.4f}")

cauchy = make_kernel("stable", M=2**16, dx=0.25, sigma=1.0)
ks = np.arange(64, 1025, 64)
print(f"\ncauchy kernel, k_max at wrap tolerance 1e-2: {k_max(cauchy, 1e-2)}")
sup = power_norms(cauchy, ks)
print(f"log-log slope over [64, 1024]: {np.polyfit(np.log(ks), np.log(sup), 1)[0]:.4f}")
