import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nonlocal_lab.decayfit import (
    SCENARIOS, DecayTarget, check_prescribed_rule, closure_check, fit_decay,
    hypothesis_H1_check, hypothesis_H2_check, interpolation_exponents, prescribed_sigma,
    run_theorem_suite, scenario_target,
)
from nonlocal_lab.errors import DomainError, FitError
from nonlocal_lab.kernels import make_kernel
from nonlocal_lab.regvar import RegVarying, SlowVarying
from nonlocal_lab.solver import InitialData
from nonlocal_lab.xseries import SeriesSpec, poisson_weighted_sum

T = np.geomspace(1e2, 1e4, 27)
LN = SlowVarying.iterlog(1.0)


# -- targets -----------------------------------------------------------------------

def test_target_formulas():
    assert DecayTarget.local(1).beta_expected == 0.5
    assert DecayTarget.local(2, 2).beta_expected == 0.5
    assert DecayTarget.local(1, 1).beta_expected == 0.0
    assert DecayTarget.stable(1, 0.5).beta_expected == 2.0
    assert DecayTarget.stable(2, 1.5, 2).beta_expected == pytest.approx(2 / 3)
    t = DecayTarget.log_perturbed(1, 2.0, 1.0)
    assert t.beta_expected == 0.5 and t.log_power == -0.5 and t.L_correction == LN
    assert DecayTarget.log_perturbed(1, 2.0, 0.0).L_correction is None
    a = DecayTarget.abstract(RegVarying(-1.0, LN))
    assert a.beta_expected == 1.0 and a.log_power == 1.0


def test_target_rejects_bad_p():
    with pytest.raises(DomainError):
        DecayTarget.local(1, 3)


def test_prescribed_exponent_and_rule():
    assert prescribed_sigma(1, 0.5, np.inf) == 2.0
    check_prescribed_rule(2.0, 4.0, LN)
    check_prescribed_rule(2.0, 2.0, LN.reciprocal())
    with pytest.raises(DomainError):
        check_prescribed_rule(2.0, 2.0, LN)
    with pytest.raises(DomainError):
        check_prescribed_rule(2.0, 3.0, LN.reciprocal())
    with pytest.raises(DomainError):
        check_prescribed_rule(2.0, 3.0, SlowVarying.oscillating())


def test_prescribed_scenario_validation():
    sc = SCENARIOS["prescribed_ln"]
    bad_gamma = replace(sc, kernel={**sc.kernel, "gamma": 2.0})
    with pytest.raises(DomainError):
        scenario_target(bad_gamma)
    bad_sigma = replace(sc, beta=0.25)
    with pytest.raises(DomainError):
        scenario_target(bad_sigma)


# -- fitting ---------------------------------------------------------------------------

def test_exact_power_law():
    rep = fit_decay((T, 3 * T**-0.5), DecayTarget.local(1), tolerance=0.02)
    assert rep.fitted_exponent == pytest.approx(-0.5, abs=1e-12)
    assert rep.verdict == "pass"
    assert np.allclose(rep.compensated_ratios, 3.0)


@settings(max_examples=40, deadline=None)
@given(c=st.floats(1e-3, 1e3), beta=st.floats(0.05, 3.0))
def test_power_law_recovered(c, beta):
    rep = fit_decay((T, c * T**-beta), DecayTarget(beta))
    assert rep.fitted_exponent == pytest.approx(-beta, abs=1e-9)
    assert rep.ratio_spread == pytest.approx(1.0, abs=1e-9)
    assert rep.verdict == "pass"


def test_log_corrected_fit():
    target = DecayTarget(1.0, LN, source="log_perturbed")
    rep = fit_decay((T, 1 / (T * np.log(T))), target)
    assert abs(rep.fitted_exponent + 1) <= 1e-3
    assert rep.verdict == "pass"


def test_missing_log_factor_is_detected():
    target = DecayTarget(1.0, LN, source="log_perturbed")
    rep = fit_decay((T, 1 / T), target, ratio_cap=1.5)
    assert rep.ratio_spread == pytest.approx(math.log(1e4) / math.log(1e2), rel=1e-12)
    assert rep.verdict == "fail"


def test_inconclusive_past_flattening_time():
    target = DecayTarget(1.0)
    rep = fit_decay((T, T**-0.5), target, t_flat=1e3)
    assert rep.verdict == "inconclusive"
    assert fit_decay((T, T**-0.5), target, t_flat=1e5).verdict == "fail"


def test_fit_argument_errors():
    target = DecayTarget(0.5)
    with pytest.raises(ValueError):
        fit_decay((T, T**-0.5), target, window=(1e2, 1e3))
    with pytest.raises(ValueError):
        fit_decay((T[:5], T[:5] ** -0.5), target)
    y = T**-0.5
    y[3] = 0.0
    with pytest.raises(FitError):
        fit_decay((T, y), target)


@pytest.mark.parametrize("beta", [-2.0, -1.0, -0.5, 0.5, 1.0])
def test_fitter_on_series_data(beta):
    spec = SeriesSpec(1.0, 1, RegVarying(beta))
    y = np.exp([poisson_weighted_sum(spec, t) for t in T])
    rep = fit_decay((T, y), DecayTarget(-beta))
    assert abs(rep.fitted_exponent - beta) <= 0.02 * abs(beta)


def test_report_serialization(tmp_path):
    rep = fit_decay((T, T**-0.5), DecayTarget.local(1))
    rep.scenario = "synthetic"
    path = tmp_path / "run.jsonl"
    rep.append_to_manifest(path)
    rep.append_to_manifest(path)
    lines = path.read_text().splitlines()
    assert len(lines) == 2
    d = json.loads(lines[0])
    assert d["verdict"] == "pass" and d["scenario"] == "synthetic"
    assert d["fit_window"] == [100.0, 10000.0]
    rep.write_csv(tmp_path / "comp.csv")
    assert (tmp_path / "comp.csv").read_text().startswith("t,norm,compensated_ratio\n")


# -- hypotheses ---------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def box():
    return make_kernel("box", M=2**15, dx=1 / 63)


def test_H1_box_holds(box):
    R = RegVarying(-0.5)
    rep = hypothesis_H1_check(box, R, 1, (1, 1024), scale=math.exp(0.5))
    assert rep.holds and rep.first_violation is None
    assert len(rep.ks) == 1024


def test_H1_violation_reported(box):
    rep = hypothesis_H1_check(box, RegVarying(-0.5), 1, (1, 64), scale=0.01)
    assert not rep.holds and rep.first_violation == 1


def test_H1_gaussian():
    J = make_kernel("gaussian", M=2**13, dx=0.125)
    assert hypothesis_H1_check(J, RegVarying(-0.5), 1, (1, 1024)).holds


def test_H1_requires_range_in_domain(box):
    with pytest.raises(ValueError):
        hypothesis_H1_check(box, RegVarying(-0.5), 8, (1, 64))


def test_H2_l1_contraction(box):
    u0 = InitialData.gaussian(box.grid, 1.0)
    rep = hypothesis_H2_check(box, u0, RegVarying(0.0), 1, 1, (1, 512),
                              scale=u0.l1_norm * 1.0001)
    assert rep.holds


def test_H2_stable():
    J = make_kernel("stable", M=2**15, dx=0.25, sigma=1.0)
    u0 = InitialData.gaussian(J.grid, 1.0)
    R = RegVarying(-1.0)
    first = hypothesis_H2_check(J, u0, R, 8, np.inf, [8], wrap_tol=1e-2).measured[0]
    rep = hypothesis_H2_check(J, u0, R, 8, np.inf, (8, 512), scale=1.05 * first * 8,
                              wrap_tol=1e-2)
    assert rep.holds


def test_H2_log_perturbed():
    J = make_kernel("logperturbed", M=2**14, dx=0.25, sigma=2.0, mu=1.0)
    u0 = InitialData.gaussian(J.grid, 1.0)
    R = RegVarying(-0.5, SlowVarying("iterlog", (1.0,), power=-0.5))
    # large-k constant of the sup norm: 1/sqrt(2 pi k ln k)
    rep = hypothesis_H2_check(J, u0, R, 8, np.inf, (8, 512), scale=1 / math.sqrt(2 * math.pi))
    assert rep.holds


# -- scenarios --------------------------------------------------------------------------------

def test_box_scenario():
    res = run_theorem_suite("local_box")
    assert abs(res.report.fitted_exponent + 0.5) <= 0.03
    assert res.report.verdict == "pass"
    ex = interpolation_exponents(res)
    assert abs(ex[2] - ex[np.inf] * 0.5) <= 0.05
    assert abs(ex[1]) <= 0.05


def test_stable_scenario():
    res = run_theorem_suite("stable_1")
    assert abs(res.report.fitted_exponent + 1.0) <= 0.05


def test_log_perturbed_scenario():
    res = run_theorem_suite("log_perturbed_+1")
    assert res.report.ratio_spread <= 2.0
    assert res.report.verdict == "pass"


def test_scenario_overrides():
    res = run_theorem_suite("local_gaussian", {"window": (1e2, 5e3)})
    assert res.report.fit_window == (1e2, 5e3)


@pytest.mark.parametrize("name", ["local_gaussian", "stable_1.5", "log_perturbed_-1",
                                  "prescribed_inv_ln"])
@pytest.mark.parametrize("N,margin", [(8, 1.05), (64, 1.05), (8, 2.0)])
def test_closure(name, N, margin):
    res = closure_check(name, N=N, margin=margin)
    if res.hypothesis.holds:
        assert res.report.verdict == "pass"


def test_closure_is_not_vacuous():
    assert closure_check("stable_1.5", N=8, margin=1.05).hypothesis.holds
