"""Decay exponents from norm-versus-time data, with predicted-rate verdicts.

A :class:`DecayTarget` holds a predicted rate

    rate(t) = t**(-beta) * L(t)**log_power,

and :func:`fit_decay` compares a norm table against it: the log-log slope of
``norm / L**log_power`` must match ``-beta`` and the compensated ratios
``norm / rate`` must stay within a bounded band over the fit window.

Scenarios bundle a kernel, initial data and target so that every predicted
rate can be reproduced end to end with :func:`run_theorem_suite`.
"""

from dataclasses import dataclass, field, asdict, replace
import json
import math

import numpy as np
from scipy import stats

from . import io
from .errors import DomainError, FitError, PeriodizationError
from .kernels import kernel_from_descriptor, power_norms, wraparound_estimate
from .regvar import RegVarying, SlowVarying
from .solver import InitialData, NormTable, time_grid, track_norms

SOURCES = ("local", "stable", "log_perturbed", "prescribed", "abstract")
DEFAULT_WINDOW = (1e2, 1e4)
DEFAULT_TOLERANCE = 0.05
DEFAULT_RATIO_CAP = 2.0
MIN_SAMPLES = 12
MIN_DECADES = 1.5


def _check_p(p):
    if p not in (1, 2, np.inf):
        raise DomainError(f"norm index must be 1, 2 or inf, got {p}")


def _lp_factor(p):
    return 1.0 - 1.0 / p  # 0 for p = 1, 1 for p = inf


@dataclass(frozen=True)
class DecayTarget:
    """Predicted rate ``t**(-beta_expected) * L_correction(t)**log_power``.

    ``log_power`` defaults to ``-beta_expected``, the form ``(t L(t))**-beta``.
    Build targets with the classmethods so that ``beta_expected`` matches its
    source formula.
    """

    beta_expected: float
    L_correction: SlowVarying = None
    p: float = np.inf
    source: str = "abstract"
    log_power: float = None

    def __post_init__(self):
        _check_p(self.p)
        if self.source not in SOURCES:
            raise DomainError(f"unknown decay source {self.source!r}")
        if self.log_power is None:
            object.__setattr__(self, "log_power", -float(self.beta_expected))

    # -- constructors ------------------------------------------------------
    @classmethod
    def local(cls, n, p=np.inf):
        """Finite-variance kernels: ``t**(-(n/2)(1-1/p))``."""
        _check_p(p)
        return cls(0.5 * n * _lp_factor(p), None, p, "local")

    @classmethod
    def stable(cls, n, sigma, p=np.inf):
        """Symbols ``1 - A|xi|**sigma``: ``t**(-(n/sigma)(1-1/p))``."""
        _check_p(p)
        return cls(n / sigma * _lp_factor(p), None, p, "stable")

    @classmethod
    def log_perturbed(cls, n, sigma, mu, p=np.inf):
        """Symbols ``1 - A|xi|**sigma ln(1/|xi|)**mu``: ``(t (ln t)**mu)**(-beta)``."""
        _check_p(p)
        L = None if mu == 0 else SlowVarying.iterlog(mu)
        return cls(n / sigma * _lp_factor(p), L, p, "log_perturbed")

    @classmethod
    def prescribed(cls, beta, L, p=np.inf):
        """Kernels built for the rate ``(t L(t))**(-beta)``."""
        _check_p(p)
        return cls(float(beta), L, p, "prescribed")

    @classmethod
    def abstract(cls, R, p=np.inf):
        """Rate equal to a regularly varying ``R(t) = t**index L(t)``."""
        _check_p(p)
        L = None if R.slow.family == "constant" else R.slow
        return cls(-float(R.index), L, p, "abstract", 1.0)

    # -- evaluation --------------------------------------------------------
    def log_correction(self, t):
        t = np.asarray(t, dtype=float)
        if self.L_correction is None or self.log_power == 0:
            return np.zeros_like(t)
        return self.log_power * self.L_correction.log_eval(t)

    def log_rate(self, t):
        return -self.beta_expected * np.log(t) + self.log_correction(t)

    def to_dict(self):
        return {
            "beta_expected": self.beta_expected,
            "L_correction": None if self.L_correction is None
            else self.L_correction.to_descriptor(),
            "p": "inf" if self.p == np.inf else int(self.p),
            "source": self.source,
            "log_power": self.log_power,
        }


@dataclass
class DecayReport:
    fitted_exponent: float
    exponent_stderr: float
    compensated_ratios: np.ndarray
    verdict: str
    fit_window: tuple
    times: np.ndarray = None
    norms: np.ndarray = None
    expected_exponent: float = None
    ratio_spread: float = None
    tolerance: float = DEFAULT_TOLERANCE
    ratio_cap: float = DEFAULT_RATIO_CAP
    t_flat: float = None
    scenario: str = ""

    def summary(self):
        """Plain dict with the scalar fields, ready for JSON."""
        return {
            "scenario": self.scenario,
            "fitted_exponent": self.fitted_exponent,
            "exponent_stderr": self.exponent_stderr,
            "expected_exponent": self.expected_exponent,
            "ratio_spread": self.ratio_spread,
            "verdict": self.verdict,
            "fit_window": list(self.fit_window),
            "tolerance": self.tolerance,
            "ratio_cap": self.ratio_cap,
            "t_flat": self.t_flat if self.t_flat is None or math.isfinite(self.t_flat)
            else "inf",
        }

    def to_json(self):
        return json.dumps(self.summary(), sort_keys=True)

    def append_to_manifest(self, path):
        """Append the summary as one JSON line."""
        with open(path, "a") as fh:
            fh.write(self.to_json() + "\n")

    def write_csv(self, path):
        io.write_csv(path, ["t", "norm", "compensated_ratio"],
                     zip(self.times, self.norms, self.compensated_ratios))


def _as_series(table, p):
    if isinstance(table, NormTable):
        return np.asarray(table.t, dtype=float), np.asarray(table[p], dtype=float)
    t, y = table
    return np.asarray(t, dtype=float), np.asarray(y, dtype=float)


def fit_decay(table, target, window=DEFAULT_WINDOW, tolerance=DEFAULT_TOLERANCE,
              ratio_cap=DEFAULT_RATIO_CAP, t_flat=None):
    """Fit the decay of ``table`` inside ``window`` and judge it against ``target``.

    Parameters
    ----------
    table : NormTable or (t, norm) pair
        For a :class:`NormTable` the column ``target.p`` is used.
    target : DecayTarget
    window : (t_lo, t_hi)
        Needs at least 12 samples spanning at least 1.5 decades.
    tolerance : float
        Allowed absolute error of the fitted exponent.
    ratio_cap : float
        Allowed max/min of the compensated ratios.
    t_flat : float, optional
        Grid flattening time.  A failed fit whose window reaches beyond it is
        reported as ``inconclusive`` instead of ``fail``.

    Returns
    -------
    DecayReport
    """
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    if not ratio_cap >= 1:
        raise ValueError("ratio_cap must be >= 1")
    t, y = _as_series(table, target.p)
    lo, hi = window
    sel = (t >= lo * (1 - 1e-12)) & (t <= hi * (1 + 1e-12))
    t, y = t[sel], y[sel]
    if t.size < MIN_SAMPLES:
        raise ValueError(f"fit window holds {t.size} samples; need {MIN_SAMPLES}")
    if math.log10(t[-1] / t[0]) < MIN_DECADES - 1e-9:
        raise ValueError(f"fit window spans less than {MIN_DECADES} decades")
    if not np.all(np.isfinite(y)) or np.any(y <= 0):
        raise FitError("norms must be positive and finite for a log-log fit")

    ly = np.log(y)
    lt = np.log(t)
    fit = stats.linregress(lt, ly - target.log_correction(t))
    comp = np.exp(ly - target.log_rate(t))
    spread = float(np.max(comp) / np.min(comp))
    slope = float(fit.slope)
    ok = abs(slope + target.beta_expected) <= tolerance and spread <= ratio_cap
    if ok:
        verdict = "pass"
    elif t_flat is not None and hi > t_flat:
        verdict = "inconclusive"
    else:
        verdict = "fail"
    return DecayReport(slope, float(fit.stderr), comp, verdict, (float(lo), float(hi)),
                       t, y, -target.beta_expected, spread, tolerance, ratio_cap, t_flat)


# -- hypotheses on convolution powers -----------------------------------------

@dataclass
class HypothesisReport:
    holds: bool
    first_violation: int  # None when the bound holds everywhere
    ks: np.ndarray
    measured: np.ndarray
    bound: np.ndarray


def _k_values(N, k_range, max_points=2048):
    if isinstance(k_range, tuple) and len(k_range) == 2:
        k_lo, k_hi = int(k_range[0]), int(k_range[1])
        if k_hi - k_lo + 1 <= max_points:
            ks = np.arange(k_lo, k_hi + 1)
        else:
            ks = np.unique(np.round(np.geomspace(k_lo, k_hi, 256)).astype(int))
    else:
        ks = np.unique(np.asarray(k_range, dtype=int))
    if ks.size == 0:
        raise ValueError("empty k_range")
    if ks[0] < N:
        raise ValueError(f"k_range starts at {ks[0]} below N={N}")
    return ks


def _check_wrap(J, k, wrap_tol):
    est = wraparound_estimate(J, int(k))
    if est > wrap_tol:
        raise PeriodizationError(
            f"k={k} exceeds the periodization limit (estimate {est:.2e} > {wrap_tol:.1e})",
            estimate=est)


def _compare(ks, measured, R, scale):
    bound = scale * np.asarray(R(ks.astype(float)), dtype=float)
    bad = np.nonzero(measured > bound)[0]
    first = int(ks[bad[0]]) if bad.size else None
    return HypothesisReport(first is None, first, ks, measured, bound)


def hypothesis_H1_check(J, R, N, k_range, scale=1.0, wrap_tol=1e-6):
    """Check ``sup|J_k| <= scale * R(k)`` for the k in ``k_range``.

    ``k_range`` is ``(k_lo, k_hi)`` or an explicit sequence, and must start at
    or after ``N``.  The largest k must pass the wrap-around guard.
    """
    ks = _k_values(N, k_range)
    if ks[-1] > 1:
        _check_wrap(J, ks[-1], wrap_tol)
    return _compare(ks, power_norms(J, ks, np.inf), R, scale)


def hypothesis_H2_check(J, u0, R, N, p, k_range, scale=1.0, wrap_tol=1e-6):
    """Check ``||J^k u0||_p <= scale * R(k)`` for the k in ``k_range``."""
    _check_p(p)
    ks = _k_values(N, k_range)
    if ks[-1] > 1:
        _check_wrap(J, ks[-1], wrap_tol)
    u = u0.u if isinstance(u0, InitialData) else u0
    return _compare(ks, power_norms(J, ks, p, u0=u), R, scale)


# -- scenarios -----------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    """Kernel, initial data, time grid and target of one reproduction run.

    ``beta`` and ``L`` are only read by the ``prescribed`` source; ``R`` only
    by ``abstract``.
    """

    name: str
    source: str
    kernel: dict
    u0: dict = field(default_factory=lambda: {"kind": "gaussian", "width": 1.0})
    chi0: float = 1.0
    t_range: tuple = DEFAULT_WINDOW
    time_ratio: float = 2.0 ** 0.25
    norms: tuple = (np.inf,)
    p: float = np.inf
    window: tuple = None
    tolerance: float = DEFAULT_TOLERANCE
    ratio_cap: float = DEFAULT_RATIO_CAP
    beta: float = None
    R: dict = None
    wrap_tol: float = 1e-6

    def __post_init__(self):
        if self.source not in SOURCES:
            raise DomainError(f"unknown scenario source {self.source!r}")
        _check_p(self.p)
        if self.p not in self.norms:
            raise DomainError("the fitted norm must be among the tracked norms")

    @property
    def fit_window(self):
        return tuple(self.window) if self.window is not None else tuple(self.t_range)

    def times(self):
        return time_grid(self.t_range[0], self.t_range[1], self.time_ratio)


def prescribed_sigma(n, beta, p):
    """Symbol exponent that produces the decay ``(t L(t))**-beta`` in ``L^p``."""
    return n / beta * _lp_factor(p)


def check_prescribed_rule(sigma, gamma, L, rtol=1e-12):
    """``gamma > sigma`` when ``L`` eventually increases, ``gamma = sigma`` when it decreases."""
    trend = L.eventually_increasing
    if trend is None:
        raise DomainError(f"cannot decide whether {L.family} L is eventually monotone")
    if trend and not gamma > sigma:
        raise DomainError(f"increasing L needs gamma > sigma, got gamma={gamma}, sigma={sigma}")
    if not trend and abs(gamma - sigma) > rtol * sigma:
        raise DomainError(f"decreasing L needs gamma = sigma, got gamma={gamma}, sigma={sigma}")


def scenario_target(sc, p=None):
    """The :class:`DecayTarget` implied by a scenario for norm index ``p``."""
    p = sc.p if p is None else p
    k = sc.kernel
    n = k.get("n", 1)
    if sc.source == "local":
        return DecayTarget.local(n, p)
    if sc.source == "stable":
        return DecayTarget.stable(n, k["sigma"], p)
    if sc.source == "log_perturbed":
        return DecayTarget.log_perturbed(n, k["sigma"], k.get("mu", 0.0), p)
    if sc.source == "prescribed":
        if sc.beta is None:
            raise DomainError("prescribed scenario needs beta")
        L = k["L"] if isinstance(k["L"], SlowVarying) else SlowVarying.from_descriptor(k["L"])
        sigma = prescribed_sigma(n, sc.beta, sc.p)
        if abs(k["sigma"] - sigma) > 1e-12 * sigma:
            raise DomainError(
                f"kernel sigma={k['sigma']} does not match (n/beta)(1-1/p)={sigma}")
        check_prescribed_rule(sigma, k["gamma"], L)
        beta = sc.beta if p == sc.p else prescribed_sigma(n, 1.0, p) / sigma
        return DecayTarget.prescribed(beta, L, p)
    if sc.R is None:
        raise DomainError("abstract scenario needs R")
    return DecayTarget.abstract(RegVarying.from_descriptor(sc.R), p)


@dataclass
class SuiteResult:
    scenario: Scenario
    report: DecayReport
    table: NormTable
    target: DecayTarget
    kernel_descriptor: dict
    advisories: list


def build_scenario(sc):
    """Kernel and initial data of a scenario."""
    J = kernel_from_descriptor(sc.kernel)
    u0 = InitialData.from_descriptor(J.grid, sc.u0)
    return J, u0


def run_theorem_suite(scenario, config=None):
    """Run one scenario end to end and fit its predicted rate.

    Parameters
    ----------
    scenario : str or Scenario
        A key of :data:`SCENARIOS` or a full scenario.
    config : dict, optional
        Field overrides applied to the scenario (``window``, ``tolerance``, ...).
    """
    sc = SCENARIOS[scenario] if isinstance(scenario, str) else scenario
    if config:
        sc = replace(sc, **config)
    target = scenario_target(sc)  # validates the scenario before any work
    J, u0 = build_scenario(sc)
    table = track_norms(J, u0, sc.chi0, sc.times(), ps=sc.norms)
    report = fit_decay(table, target, sc.fit_window, sc.tolerance, sc.ratio_cap,
                       J.flattening_time())
    report.scenario = sc.name
    return SuiteResult(sc, report, table, target, J.descriptor(), list(J.advisories))


@dataclass
class ClosureResult:
    hypothesis: HypothesisReport
    report: DecayReport
    scale: float


def closure_check(scenario, N=8, margin=1.05, k_hi=None, max_points=48):
    """Pair a convolution-power hypothesis with the solver verdict.

    The bound ``R(k) = C k**(-beta) L(k)**log_power`` takes ``C`` from the
    measured ``||J^N u0||_p`` times ``margin``; it is checked on ``[N, k_hi]``
    (default: the end of the fit window).
    """
    sc = SCENARIOS[scenario] if isinstance(scenario, str) else scenario
    target = scenario_target(sc)
    J, u0 = build_scenario(sc)
    k_hi = int(k_hi or sc.fit_window[1])
    ks = np.unique(np.round(np.geomspace(N, k_hi, max_points)).astype(int))

    def R(k):
        return np.exp(target.log_rate(k))

    first = power_norms(J, [N], sc.p, u0=u0.u)[0]
    scale = margin * first / float(R(np.array([float(N)]))[0])
    hyp = hypothesis_H2_check(J, u0, R, N, sc.p, ks, scale=scale, wrap_tol=sc.wrap_tol)
    table = track_norms(J, u0, sc.chi0, sc.times(), ps=(sc.p,))
    report = fit_decay(table, target, sc.fit_window, sc.tolerance, sc.ratio_cap,
                       J.flattening_time())
    report.scenario = sc.name
    return ClosureResult(hyp, report, scale)


def _ln():
    return SlowVarying.iterlog(1.0).to_descriptor()


def _inv_ln():
    return SlowVarying.iterlog(-1.0).to_descriptor()


SCENARIOS = {
    s.name: s for s in [
        Scenario("local_box", "local",
                 {"family": "box", "n": 1, "M": 2**14, "dx": 1 / 15, "width": 1.0},
                 norms=(1, 2, np.inf)),
        Scenario("local_gaussian", "local",
                 {"family": "gaussian", "n": 1, "M": 2**13, "dx": 0.25, "variance": 1.0},
                 norms=(1, 2, np.inf)),
        Scenario("stable_1", "stable",
                 {"family": "stable", "n": 1, "M": 2**20, "dx": 0.25, "sigma": 1.0},
                 wrap_tol=1e-2),
        Scenario("stable_1.5", "stable",
                 {"family": "stable", "n": 1, "M": 2**16, "dx": 0.25, "sigma": 1.5},
                 wrap_tol=1e-2),
        # resolving t**-2 decay needs ~t**2 modes; a lattice kernel (symbol
        # exact at every grid frequency) on a coarse grid reaches it
        Scenario("stable_0.5", "stable",
                 {"family": "stable", "n": 1, "M": 2**22, "dx": 30.0, "sigma": 0.5,
                  "lattice": True},
                 u0={"kind": "gaussian", "width": 120.0},
                 t_range=(1e2, 10**3.5), time_ratio=10 ** (1 / 16), wrap_tol=5e-2),
        Scenario("log_perturbed_+1", "log_perturbed",
                 {"family": "logperturbed", "n": 1, "M": 2**16, "dx": 0.25,
                  "sigma": 2.0, "mu": 1.0}),
        Scenario("log_perturbed_-1", "log_perturbed",
                 {"family": "logperturbed", "n": 1, "M": 2**14, "dx": 0.25,
                  "sigma": 2.0, "mu": -1.0}),
        Scenario("prescribed_ln", "prescribed",
                 {"family": "prescribed", "n": 1, "M": 2**17, "dx": 0.25,
                  "sigma": 2.0, "gamma": 4.0, "L": _ln()},
                 beta=0.5),
        Scenario("prescribed_inv_ln", "prescribed",
                 {"family": "prescribed", "n": 1, "M": 2**15, "dx": 0.25,
                  "sigma": 2.0, "gamma": 2.0, "L": _inv_ln()},
                 beta=0.5),
        Scenario("abstract_stable_1", "abstract",
                 {"family": "stable", "n": 1, "M": 2**20, "dx": 0.25, "sigma": 1.0},
                 R={"index": -1.0}, wrap_tol=1e-2),
    ]
}


def interpolation_exponents(result):
    """Fitted exponents for every tracked norm of a :class:`SuiteResult`."""
    sc = result.scenario
    out = {}
    for p in sc.norms:
        rep = fit_decay(result.table, scenario_target(sc, p), sc.fit_window,
                        sc.tolerance, sc.ratio_cap)
        out[p] = rep.fitted_exponent
    return out


def scenario_to_dict(sc):
    d = asdict(sc)
    d["norms"] = ["inf" if p == np.inf else int(p) for p in sc.norms]
    d["p"] = "inf" if sc.p == np.inf else int(sc.p)
    d["t_range"] = list(sc.t_range)
    d["window"] = None if sc.window is None else list(sc.window)
    return d
