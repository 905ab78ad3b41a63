"""Acceptance checks, one test per criterion.

Each test prints a single ``PASS`` or ``FAIL`` line; run with ``-s`` to see them.
"""
import math
import time

import numpy as np
import pytest
from scipy import special

from nonlocal_lab.decayfit import (
    SCENARIOS, DecayTarget, closure_check, fit_decay, interpolation_exponents,
    run_theorem_suite,
)
from nonlocal_lab.kernels import k_max, make_kernel, power_norms, sharp_young_bound
from nonlocal_lab.regvar import RegVarying, SlowVarying, karamata_inf_check, karamata_sup_check
from nonlocal_lab.solver import InitialData, solve_series, solve_spectral
from nonlocal_lab.xseries import SeriesSpec, kummer_M, kummer_asymptotic_log, \
    verify_series_asymptotics


def verdict(number, title, ok, detail):
    print(f"\n{'PASS' if ok else 'FAIL'} [{number:2d}] {title}: {detail}")
    assert ok, detail


# -- 1 ------------------------------------------------------------------------------------

def test_series_asymptotics():
    t_grid = np.geomspace(1e2, 1e4, 17)
    slow = {"1": SlowVarying.constant(), "ln": SlowVarying.iterlog(1.0),
            "ln^2": SlowVarying.iterlog(2.0), "1/ln": SlowVarying.iterlog(-1.0)}
    start = time.perf_counter()
    worst, bad = 1.0, []
    for beta in (-2.0, -1.0, -0.5, 0.0):
        for name, L in slow.items():
            res = verify_series_asymptotics(SeriesSpec(1.0, 3, RegVarying(beta, L)), t_grid)
            spread = res.top_decade_spread
            worst = max(worst, spread)
            if res.verdict != "bounded" or spread > 1.25:
                bad.append((beta, name, res.verdict, spread))
    elapsed = time.perf_counter() - start
    verdict(1, "series asymptotics", not bad and elapsed < 10.0,
            f"12 combinations, worst top-decade spread {worst:.4f}, {elapsed:.2f} s, bad={bad}")


# -- 2 ------------------------------------------------------------------------------------

def test_kummer_bridge():
    errs = []
    for s in (1.0, 10.0):
        errs.append(abs(kummer_M(1.0, 2.0, s) * s / math.expm1(s) - 1))
    s = 100.0
    log_lhs = kummer_M(1.0, 2.0, s, log=True) + math.log(s) - (s + math.log(-math.expm1(-s)))
    errs.append(abs(math.expm1(log_lhs)))
    ratios = []
    for a, b in ((1.0, 2.0), (0.5, 3.0)):
        log_ref = special.gammaln(b) - special.gammaln(a) + (a - b) * math.log(500.0) + 500.0
        ratios.append(math.exp(kummer_M(a, b, 500.0, log=True) - log_ref))
        assert kummer_asymptotic_log(a, b, 500.0) == pytest.approx(log_ref, rel=1e-14)
    ok = max(errs) <= 1e-12 and all(abs(r - 1) <= 1e-2 for r in ratios)
    verdict(2, "Kummer bridge", ok,
            f"identity error {max(errs):.1e}, asymptotic ratios {ratios[0]:.5f}, {ratios[1]:.5f}")


# -- 3 ------------------------------------------------------------------------------------

def test_box_convolution_power_rate():
    start = time.perf_counter()
    J = make_kernel("box", M=2**15, dx=1 / 63)
    ks = np.arange(1, 1025)
    sup = power_norms(J, ks)
    bound = np.array([sharp_young_bound(J, int(k)).bound for k in ks])
    sel = ks >= 64
    slope = np.polyfit(np.log(ks[sel]), np.log(sup[sel]), 1)[0]
    elapsed = time.perf_counter() - start
    ok = abs(slope + 0.5) <= 0.02 and bool(np.all(sup <= bound)) and elapsed < 30.0
    verdict(3, "box convolution-power rate", ok,
            f"slope {slope:.5f}, max sup/bound {np.max(sup / bound):.4f}, {elapsed:.2f} s")


# -- 4 ------------------------------------------------------------------------------------

def kernel_zoo():
    L = SlowVarying.iterlog(1.0)
    return [
        make_kernel("box", M=2**12, dx=1 / 15),
        make_kernel("tent", M=2**12, dx=1 / 16),
        make_kernel("gaussian", M=2**12, dx=0.125),
        make_kernel("stable", M=2**14, dx=0.25, sigma=1.0),
        make_kernel("stable", M=2**12, dx=0.25, sigma=1.5),
        make_kernel("logperturbed", M=2**12, dx=0.25, sigma=2.0, mu=1.0),
        make_kernel("logperturbed", M=2**12, dx=0.25, sigma=2.0, mu=-1.0),
        make_kernel("prescribed", M=2**12, dx=0.25, sigma=2.0, gamma=4.0, L=L),
        make_kernel("prescribed", M=2**12, dx=0.25, sigma=2.0, gamma=2.0, L=L.reciprocal()),
        make_kernel("pathological", M=2**12, X=64.0),
        make_kernel("box", n=2, M=128, dx=1 / 15),
        make_kernel("gaussian", n=2, M=128, dx=0.25),
    ]


def test_l1_contraction():
    worst, checked = -np.inf, 0
    for J in kernel_zoo():
        ks = np.arange(1, k_max(J) + 1)
        l1 = power_norms(J, ks, p=1)
        excess = l1 - (J.l1_norm**ks + 1e-8)
        worst = max(worst, float(excess.max()))
        checked += len(ks)
    verdict(4, "L1 contraction", worst <= 0.0,
            f"{checked} powers over 12 kernels, max excess {worst:.2e}")


# -- 5 ------------------------------------------------------------------------------------

def test_series_matches_spectral():
    kernels = [make_kernel("box", M=2**13, dx=1 / 15),
               make_kernel("gaussian", M=2**12, dx=0.25),
               make_kernel("stable", M=2**14, dx=0.25, sigma=1.5)]
    worst = 0.0
    for J in kernels:
        u0 = InitialData.gaussian(J.grid, 1.0)
        for t in (1.0, 10.0, 100.0):
            a = solve_series(J, u0, 1.0, t).u
            b = solve_spectral(J, u0, 1.0, t).u
            worst = max(worst, float(np.max(np.abs(a - b))) / u0.sup_norm)
    verdict(5, "series vs spectral", worst <= 1e-8, f"9 pairs, max relative difference {worst:.2e}")


# -- 6 ------------------------------------------------------------------------------------

def test_local_kernels():
    lines, ok = [], True
    for name in ("local_box", "local_gaussian"):
        ex = interpolation_exponents(run_theorem_suite(name))
        good = abs(ex[np.inf] + 0.5) <= 0.05 and abs(ex[2] + 0.25) <= 0.05
        ok &= good
        lines.append(f"{name} sup {ex[np.inf]:.4f}, L2 {ex[2]:.4f}")
    verdict(6, "local kernels", ok, "; ".join(lines))


# -- 7 ------------------------------------------------------------------------------------

def test_stable_kernels():
    lines, ok = [], True
    for sigma, name in ((0.5, "stable_0.5"), (1.0, "stable_1"), (1.5, "stable_1.5")):
        fitted = run_theorem_suite(name).report.fitted_exponent
        expected = -1.0 / sigma
        ok &= abs(fitted / expected - 1) <= 0.07
        lines.append(f"sigma {sigma}: {fitted:.4f} vs {expected:.4f}")
    verdict(7, "stable kernels", ok, "; ".join(lines))


# -- 8 ------------------------------------------------------------------------------------

def test_log_perturbed_kernels():
    lines, ok = [], True
    for mu, name in ((1.0, "log_perturbed_+1"), (-1.0, "log_perturbed_-1")):
        res = run_theorem_suite(name)
        lo, hi = res.report.fit_window
        t = res.table.t
        sel = (t >= lo) & (t <= hi)
        y = res.table[np.inf][sel]
        corrected = y * np.sqrt(t[sel] * np.log(t[sel]) ** mu)
        spread = corrected.max() / corrected.min()
        power_only = fit_decay(res.table, DecayTarget(0.5), res.report.fit_window)
        drift = np.diff(power_only.compensated_ratios)
        monotone = bool(np.all(drift < 0) or np.all(drift > 0))
        ok &= spread <= 2.0 and monotone
        lines.append(f"mu {mu:+.0f}: spread {spread:.4f}, power-only drift "
                     f"{'monotone' if monotone else 'not monotone'}")
    verdict(8, "log-perturbed kernels", ok, "; ".join(lines))


# -- 9 ------------------------------------------------------------------------------------

def test_prescribed_decay():
    lines, ok = [], True
    for name, L in (("prescribed_ln", np.log), ("prescribed_inv_ln", lambda s: 1 / np.log(s))):
        res = run_theorem_suite(name)
        lo, hi = res.report.fit_window
        t = res.table.t
        sel = (t >= lo) & (t <= hi)
        corrected = res.table[np.inf][sel] * np.sqrt(t[sel] * L(t[sel]))
        spread = corrected.max() / corrected.min()
        ok &= spread <= 2.0
        lines.append(f"{name} spread {spread:.4f}")
    verdict(9, "prescribed decay", ok, "; ".join(lines))


# -- 10 -----------------------------------------------------------------------------------

def test_karamata_checks():
    monotone = [SlowVarying.constant(2.5), SlowVarying.iterlog(1.0), SlowVarying.iterlog(2.0),
                SlowVarying.iterlog(-1.0), SlowVarying.iterlog(1.0, -1.0),
                SlowVarying.explog(0.5), SlowVarying.explog(1 / 3, 1.0)]
    dev_mono = dev_osc = 0.0
    for eps in (0.5, 1.0):
        for L in monotone:
            for check in (karamata_sup_check, karamata_inf_check):
                dev_mono = max(dev_mono, abs(check(L, eps, [1e8])[0] - 1))
        for check in (karamata_sup_check, karamata_inf_check):
            dev_osc = max(dev_osc, abs(check(SlowVarying.oscillating(), eps, [1e8])[0] - 1))
    verdict(10, "Karamata checks", dev_mono <= 1e-6 and dev_osc <= 5e-2,
            f"monotone deviation {dev_mono:.1e}, oscillating deviation {dev_osc:.1e}")


# -- 11 -----------------------------------------------------------------------------------

def test_hypothesis_closure():
    held, broken = [], []
    for name in SCENARIOS:
        if name == "stable_0.5":
            continue  # covered below with its calibrated constant
        res = closure_check(name, N=8, margin=1.05)
        if res.hypothesis.holds:
            held.append(name)
            if res.report.verdict != "pass":
                broken.append(name)
    res = closure_check("stable_0.5", N=64, margin=2.0)
    if res.hypothesis.holds:
        held.append("stable_0.5")
        if res.report.verdict != "pass":
            broken.append("stable_0.5")
    verdict(11, "hypothesis closure", bool(held) and not broken,
            f"hypothesis held for {len(held)} scenarios ({', '.join(held)}); "
            f"fit failed for {broken or 'none'}")
