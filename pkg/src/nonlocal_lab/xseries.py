"""Exponential series with regularly varying coefficients.

The central object is the Poisson-weighted sum

    S(t) = exp(-x) * sum_{k >= N} x**k / k! * R(k),      x = alpha * t,

which behaves like ``R(x)`` for large ``x`` when ``R`` is regularly varying.
All weights are formed from ``gammaln`` in the log domain, so ``x`` in the
tens of thousands is fine.  Kummer's function and the Gamma-ratio expansion
live here as well since they describe the pure power case exactly.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy import special, stats

from .errors import DomainError, EvaluationError
from .regvar import RegVarying

KMAX_SAFETY = 6.0


@dataclass(frozen=True)
class SeriesSpec:
    """Parameters of ``sum_{k>=N} (alpha t)^k / k! * R(k)``."""

    alpha: float
    N: int
    R: RegVarying
    tail_tolerance: float = 1e-12

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError("alpha must be positive")
        if int(self.N) != self.N or self.N < 0:
            raise DomainError("N must be a non-negative integer")
        if self.R.index < 0 and self.N < 1:
            raise DomainError("N >= 1 is required when R has negative index")
        if self.N > 0 and self.N < self.R.domain_start:
            raise DomainError(
                f"N={self.N} lies below the domain start {self.R.domain_start:g} of R"
            )
        if not 0 < self.tail_tolerance <= 1e-3:
            raise DomainError("tail_tolerance must lie in (0, 1e-3]")


@dataclass
class AsymptoticRatio:
    t_grid: np.ndarray
    ratios: np.ndarray
    verdict: str
    decade_spread: np.ndarray  # max/min of the ratios per decade of t

    @property
    def top_decade_spread(self):
        return float(self.decade_spread[-1])


def _logsumexp(a):
    m = np.max(a)
    if not np.isfinite(m):
        return m
    return float(m + math.log(np.sum(np.exp(a - m))))


def log_poisson_weights(x, k):
    """``log(exp(-x) x**k / k!)`` for integer array ``k``."""
    k = np.asarray(k, dtype=float)
    return -x + k * math.log(x) - special.gammaln(k + 1.0)


def _k_max(x, tol, c=KMAX_SAFETY):
    return int(math.ceil(x + c * math.sqrt(x * math.log(1.0 / tol)) + c * math.log(1.0 / tol)))


def poisson_log_sum(log_coef, x, k_start=0, tol=1e-12, log_coef_sup=None):
    """``log sum_{k >= k_start} Pois(x)[k] * exp(log_coef(k))``.

    ``log_coef`` maps an integer array to log coefficients.  The range is cut
    at ``K_max`` once the discarded Poisson tail mass times the largest
    coefficient on ``[K_max, 2 K_max]`` is below ``tol`` times the partial sum.
    """
    if not x > 0:
        raise DomainError("Poisson parameter must be positive")
    c = KMAX_SAFETY
    while True:
        k_hi = max(_k_max(x, tol, c), k_start + 1)
        k = np.arange(k_start, k_hi + 1)
        terms = log_poisson_weights(x, k) + log_coef(k)
        if np.any(np.isnan(terms)) or np.any(terms == np.inf):
            raise EvaluationError("non-finite term in Poisson-weighted sum")
        total = _logsumexp(terms)
        probe = np.arange(k_hi + 1, 2 * k_hi + 2)
        sup = np.max(log_coef(probe)) if log_coef_sup is None else log_coef_sup(probe)
        log_tail = stats.poisson.logsf(k_hi, x) + sup
        if log_tail <= math.log(tol) + total:
            return total
        c *= 1.5


def _log_coefficients(R, include_zero):
    """Log of ``R(k)``; with ``include_zero`` the pure-power value at k=0 is used."""
    if not include_zero:
        return R.log_eval
    # R(0) is only meaningful for a pure power of non-negative index
    if R.slow.family != "constant" or R.index < 0:
        raise DomainError("N = 0 needs a constant slowly varying part and index >= 0")
    c0 = math.log(R.slow.params[0]) * R.slow.power

    def log_coef(k):
        k = np.asarray(k, dtype=float)
        if R.index == 0:
            return np.full_like(k, c0)
        with np.errstate(divide="ignore"):
            return R.index * np.log(k) + c0

    return log_coef


def poisson_weighted_sum(spec, t):
    """Log of ``exp(-alpha t) * sum_{k>=N} (alpha t)^k / k! * R(k)``."""
    if not t > 0:
        raise DomainError("t must be positive")
    log_coef = _log_coefficients(spec.R, spec.N == 0)
    return poisson_log_sum(log_coef, spec.alpha * t, spec.N, spec.tail_tolerance)


def finite_partial_log_sum(spec, t, n_terms):
    """Log of the Poisson-weighted terms ``k = 0 .. n_terms-1``."""
    k = np.arange(0, n_terms)
    terms = log_poisson_weights(spec.alpha * t, k) + _log_coefficients(spec.R, True)(k)
    return _logsumexp(terms)


def kummer_M(a, b, s, log=False):
    """Kummer's confluent hypergeometric function ``M(a, b, s)``.

    Restricted to ``b > a > 0`` and ``s >= 0``.  For ``s > 700`` (or when
    ``log=True``) the series is summed in the log domain and ``log M`` is
    returned when requested.
    """
    if not (a > 0 and b > a):
        raise DomainError(f"kummer_M needs b > a > 0, got a={a}, b={b}")
    if s < 0:
        raise DomainError("kummer_M needs s >= 0")
    if s == 0:
        return 0.0 if log else 1.0
    if s <= 700 and not log:
        total = term = 1.0
        k = 0
        while True:
            term *= (a + k) / (b + k) * s / (k + 1)
            total += term
            k += 1
            if term < 1e-17 * total and k > s:
                return total
    # log-domain: log terms by cumulative sums of log ratios
    k_hi = _k_max(s, 1e-17)
    k = np.arange(k_hi)
    log_ratio = np.log((a + k) / (b + k)) + math.log(s) - np.log(k + 1.0)
    log_terms = np.concatenate(([0.0], np.cumsum(log_ratio)))
    val = _logsumexp(log_terms)
    if log:
        return val
    if val > 709:
        raise EvaluationError("kummer_M overflows; use log=True")
    return math.exp(val)


def kummer_asymptotic_log(a, b, s):
    """Log of the leading asymptotic form ``Gamma(b)/Gamma(a) s**(a-b) e**s``."""
    return special.gammaln(b) - special.gammaln(a) + (a - b) * math.log(s) + s


def gamma_ratio_expansion(s, a, b):
    """Exact ``Gamma(s+a)/Gamma(s+b)`` and its two-term expansion.

    The expansion is ``s**(a-b) * (1 + (a-b)(a+b-1)/(2s))``.
    """
    if not s > 0:
        raise DomainError("s must be positive")
    for v in (s + a, s + b):
        if v <= 0:
            raise DomainError(f"Gamma pole or negative argument at {v}")
    exact = math.exp(special.gammaln(s + a) - special.gammaln(s + b))
    approx = s ** (a - b) * (1.0 + (a - b) * (a + b - 1.0) / (2.0 * s))
    return exact, approx


def _decade_spreads(t, ratios):
    lt = np.log10(t)
    edges = np.arange(math.floor(lt[0] + 1e-9), math.ceil(lt[-1] - 1e-9) + 1)
    spreads = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (lt >= lo - 1e-9) & (lt <= hi + 1e-9)
        if np.count_nonzero(sel) >= 2:
            r = ratios[sel]
            spreads.append(np.max(r) / np.min(r))
    return np.array(spreads)


def verify_series_asymptotics(spec, t_grid, bound=10.0):
    """Ratios of the series to ``R(alpha t) e**(alpha t)`` on ``t_grid``.

    The verdict is ``bounded`` when the top-decade max/min is at most
    ``bound`` and the per-decade spreads do not grow.
    """
    t = np.asarray(t_grid, dtype=float)
    if t.size < 2 or np.any(np.diff(t) <= 0):
        raise DomainError("t_grid must be increasing with at least two points")
    if math.log10(t[-1] / t[0]) < 2 - 1e-9:
        raise DomainError("t_grid must span at least two decades")
    if spec.alpha * t[0] < spec.R.domain_start:
        raise DomainError("alpha * t must lie in the domain of R")
    logs = np.array([poisson_weighted_sum(spec, ti) for ti in t])
    ratios = np.exp(logs - spec.R.log_eval(spec.alpha * t))
    spreads = _decade_spreads(t, ratios)
    contracting = bool(np.all(np.diff(spreads) <= 1e-9))
    if not np.all(np.isfinite(ratios)) or np.any(ratios <= 0):
        verdict = "unbounded"
    elif spreads[-1] <= bound and contracting:
        verdict = "bounded"
    elif spreads[-1] > bound and not contracting:
        verdict = "unbounded"
    else:
        verdict = "inconclusive"
    return AsymptoticRatio(t, ratios, verdict, spreads)
