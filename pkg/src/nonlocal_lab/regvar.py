"""Slowly and regularly varying functions.

A slowly varying function ``L`` satisfies ``L(lam*s)/L(s) -> 1`` for every
``lam > 0``; a regularly varying function of index ``beta`` is
``R(s) = s**beta * L(s)``.  Everything here is evaluated in the log domain
first, so that ``R`` can be used on arguments as large as ``1e4`` inside
exponential series without overflow.

Families
--------
``constant``      ``L(s) = c0``
``iterlog``       ``L(s) = prod_j (ln_j s)**mu_j``  (``ln_j`` = j-fold log)
``explog``        ``L(s) = exp(prod_j (ln_j s)**mu_j)``
``oscillating``   ``L(s) = exp((ln s)**(1/3) * cos((ln s)**(1/3)))``
``karamata``      ``L(s) = c(s) * exp(int_{s0}^s eps(tau)/tau dtau)``
"""

from dataclasses import dataclass, field
import math
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .errors import DomainError, EvaluationError

FAMILIES = ("constant", "iterlog", "explog", "oscillating", "karamata")

# mesh used by the Karamata sup/inf checks
POINTS_PER_DECADE = 512
ENDPOINT_REFINEMENT = 4

DEFAULT_TOLERANCE = {
    "constant": 1e-6,
    "iterlog": 1e-6,
    "explog": 1e-6,
    "karamata": 1e-6,
    "oscillating": 5e-2,
}


def _tower(m):
    """exp applied m times to 1: the point where ln_m first reaches 1."""
    x = 1.0
    for _ in range(m):
        x = math.exp(x)
    return x


def _iterated_logs(s, m):
    """Return [ln s, ln ln s, ..., ln_m s] for an array ``s``."""
    out = []
    cur = np.asarray(s, dtype=float)
    for _ in range(m):
        with np.errstate(divide="ignore", invalid="ignore"):
            cur = np.log(cur)
        out.append(cur)
    return out


@dataclass(frozen=True)
class SlowVarying:
    """A member of one of the shipped slowly varying families.

    Parameters
    ----------
    family : str
        One of :data:`FAMILIES`.
    params : tuple of float
        Family parameters (``(c0,)`` for constant, exponents otherwise,
        unused for oscillating and karamata).
    domain_start : float, optional
        Left end ``N0`` of the domain.  Defaults to ``e`` (or the tower
        ``e, e**e, ...`` needed to keep iterated logarithms >= 1).
    power : float
        The function represented is ``L_family(s)**power``; ``power=-1``
        gives the reciprocal of families without a native reciprocal.
    c, eps, s0 :
        Karamata representation data.
    """

    family: str
    params: tuple = ()
    domain_start: Optional[float] = None
    power: float = 1.0
    c: Optional[Callable[[float], float]] = field(default=None, compare=False)
    eps: Optional[Callable[[float], float]] = field(default=None, compare=False)
    s0: Optional[float] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown slowly varying family {self.family!r}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.domain_start is None:
            if self.family == "constant":
                start = 1.0  # no logarithm to protect
            else:
                m = len(self.params) if self.family in ("iterlog", "explog") else 1
                start = _tower(max(m, 1))
            object.__setattr__(self, "domain_start", start)
        n0 = float(self.domain_start)
        object.__setattr__(self, "domain_start", n0)
        if not n0 > 0:
            raise DomainError("domain_start must be positive")

        if self.family == "constant":
            if len(self.params) != 1 or not self.params[0] > 0:
                raise DomainError("constant family needs one positive parameter c0")
        elif self.family in ("iterlog", "explog"):
            if not self.params:
                raise DomainError(f"{self.family} family needs at least one exponent")
            logs = _iterated_logs(n0, len(self.params))
            if not logs[-1] > 0:
                raise DomainError(
                    f"domain_start={n0} too small: iterated log of order "
                    f"{len(self.params)} must be positive"
                )
            if self.family == "explog":
                mu = self.params
                # exp((ln s)**mu1 ...) stops being slowly varying once mu1 > 1
                if mu[0] > 1 or (mu[0] == 1 and (len(mu) == 1 or mu[1] >= 0)):
                    raise DomainError("explog family needs mu1 < 1 (or mu1 = 1, mu2 < 0)")
        elif self.family == "oscillating":
            if n0 < 1:
                raise DomainError("oscillating family needs domain_start >= 1")
        elif self.family == "karamata":
            if self.c is None or self.eps is None:
                raise DomainError("karamata family needs callables c and eps")
            if self.s0 is None:
                object.__setattr__(self, "s0", n0)
            if self.s0 < n0:
                raise DomainError("karamata s0 must lie in the domain")

    # -- constructors ------------------------------------------------------
    @classmethod
    def constant(cls, c0=1.0):
        return cls("constant", (c0,))

    @classmethod
    def iterlog(cls, *mu, domain_start=None):
        return cls("iterlog", tuple(mu), domain_start=domain_start)

    @classmethod
    def explog(cls, *mu, domain_start=None):
        return cls("explog", tuple(mu), domain_start=domain_start)

    @classmethod
    def oscillating(cls, domain_start=None):
        return cls("oscillating", (), domain_start=domain_start)

    @classmethod
    def karamata(cls, c, eps, s0=None, domain_start=None):
        return cls("karamata", (), domain_start=domain_start, c=c, eps=eps, s0=s0)

    # -- evaluation --------------------------------------------------------
    def _check_domain(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(~(s >= self.domain_start)):
            raise DomainError(
                f"argument below domain start {self.domain_start:g} "
                f"(min argument {np.min(s):g})"
            )
        return s

    def _family_log(self, s):
        fam = self.family
        if fam == "constant":
            return np.full_like(s, math.log(self.params[0]))
        if fam == "iterlog":
            logs = _iterated_logs(s, len(self.params))
            return sum(mu * np.log(lj) for mu, lj in zip(self.params, logs))
        if fam == "explog":
            logs = _iterated_logs(s, len(self.params))
            prod = np.ones_like(s)
            for mu, lj in zip(self.params, logs):
                prod = prod * lj**mu
            return prod
        if fam == "oscillating":
            v = np.cbrt(np.log(s))
            return v * np.cos(v)
        return self._karamata_log(s)

    def _karamata_log(self, s):
        flat = s.ravel()
        order = np.argsort(flat)
        xs = flat[order]
        # cumulative integral of eps(tau)/tau from s0 along the sorted points
        nodes = np.concatenate(([self.s0], xs))
        pieces = np.empty(len(xs))
        for i in range(len(xs)):
            a, b = nodes[i], nodes[i + 1]
            if a == b:
                pieces[i] = 0.0
                continue
            # substitute tau = exp(w) so the integrand is eps(exp(w)) dw
            val, _ = integrate.quad(
                lambda w: self.eps(math.exp(w)), math.log(a), math.log(b),
                epsabs=0.0, epsrel=1e-10, limit=200,
            )
            pieces[i] = val
        # xs may start below s0; the first piece then carries the sign
        integral = np.cumsum(pieces)
        cvals = np.array([self.c(x) for x in xs], dtype=float)
        if np.any(~(cvals > 0)):
            raise EvaluationError("karamata c(s) must be positive")
        out = np.empty_like(flat)
        out[order] = np.log(cvals) + integral
        return out.reshape(s.shape)

    def log_eval(self, s):
        """Natural log of ``L(s)``; accepts scalars or arrays."""
        scalar = np.ndim(s) == 0
        s = self._check_domain(s)
        val = self.power * self._family_log(np.atleast_1d(s))
        if not np.all(np.isfinite(val)):
            raise EvaluationError(f"non-finite value of {self.family} family")
        return float(val[0]) if scalar else val.reshape(np.shape(s))

    def eval(self, s):
        """Value ``L(s) > 0``."""
        with np.errstate(over="ignore", under="ignore"):
            out = np.exp(self.log_eval(s))
        if not np.all(np.isfinite(out)) or np.any(out <= 0):
            raise EvaluationError(f"{self.family} value overflowed")
        return out

    __call__ = eval

    def reciprocal(self):
        """The slowly varying function ``1/L``."""
        if self.family == "constant":
            return SlowVarying("constant", (1.0 / self.params[0],), self.domain_start)
        if self.family == "iterlog" and self.power == 1.0:
            return SlowVarying("iterlog", tuple(-m for m in self.params), self.domain_start)
        return SlowVarying(
            self.family, self.params, self.domain_start, -self.power,
            self.c, self.eps, self.s0,
        )

    @property
    def is_monotone(self):
        return self.family != "oscillating"

    @property
    def eventually_increasing(self):
        """True/False for monotone families, None when not decidable."""
        if self.family == "constant":
            return None
        if self.family == "iterlog":
            lead = next((m for m in self.params if m != 0), 0.0) * self.power
            return None if lead == 0 else lead > 0
        if self.family == "explog":
            return self.power > 0
        return None

    def default_tolerance(self):
        return DEFAULT_TOLERANCE[self.family]

    # -- serialization -----------------------------------------------------
    def to_descriptor(self):
        if self.family == "karamata":
            raise DomainError("karamata family holds callables and has no descriptor")
        d = {"family": self.family, "params": list(self.params),
             "domain_start": self.domain_start}
        if self.power != 1.0:
            d["power"] = self.power
        return d

    @classmethod
    def from_descriptor(cls, d):
        allowed = {"family", "params", "domain_start", "power"}
        unknown = set(d) - allowed
        if unknown:
            raise DomainError(f"unknown slowly varying descriptor fields: {sorted(unknown)}")
        if "family" not in d:
            raise DomainError("slowly varying descriptor needs 'family'")
        return cls(d["family"], tuple(d.get("params", ())),
                   d.get("domain_start"), float(d.get("power", 1.0)))


@dataclass(frozen=True)
class RegVarying:
    """``R(s) = s**index * slow(s)``."""

    index: float
    slow: SlowVarying = field(default_factory=SlowVarying.constant)

    @property
    def domain_start(self):
        return self.slow.domain_start

    def log_eval(self, s):
        ls = self.slow.log_eval(s)
        return self.index * np.log(s) + ls

    def eval(self, s):
        with np.errstate(over="ignore", under="ignore"):
            out = np.exp(self.log_eval(s))
        if not np.all(np.isfinite(out)) or np.any(out <= 0):
            raise EvaluationError("regularly varying value out of range")
        return out

    __call__ = eval

    def to_descriptor(self):
        return {"index": self.index, "slow": self.slow.to_descriptor()}

    @classmethod
    def from_descriptor(cls, d):
        unknown = set(d) - {"index", "slow"}
        if unknown:
            raise DomainError(f"unknown regularly varying descriptor fields: {sorted(unknown)}")
        slow = SlowVarying.from_descriptor(d["slow"]) if "slow" in d else SlowVarying.constant()
        return cls(float(d["index"]), slow)


def evaluate(f, s):
    """Evaluate a :class:`SlowVarying` or :class:`RegVarying` at ``s``."""
    return f.eval(s)


def _tau_mesh(n0, s):
    """Log-spaced mesh on [n0, s], denser over the last decade."""
    lo, hi = math.log10(n0), math.log10(s)
    if hi <= lo:
        return np.array([s])
    n = max(int(math.ceil((hi - lo) * POINTS_PER_DECADE)), 2)
    coarse = np.logspace(lo, hi, n + 1)
    fine_lo = max(lo, hi - 1.0)
    nf = max(int(math.ceil((hi - fine_lo) * POINTS_PER_DECADE * ENDPOINT_REFINEMENT)), 2)
    fine = np.logspace(fine_lo, hi, nf + 1)
    mesh = np.union1d(coarse, fine)
    mesh[-1] = s
    return mesh[mesh >= n0]


def _extremum_ratios(L, eps, s_grid, sign, reducer):
    s_grid = np.asarray(s_grid, dtype=float)
    if s_grid.size == 0:
        raise ValueError("s_grid must not be empty")
    if not eps > 0:
        raise ValueError("eps must be positive")
    if np.any(np.diff(s_grid) <= 0):
        raise ValueError("s_grid must be strictly increasing")
    if s_grid[0] < L.domain_start:
        raise DomainError("s_grid must lie in the domain of L")
    out = []
    for s in s_grid:
        tau = _tau_mesh(L.domain_start, s)
        g = sign * eps * np.log(tau) + L.log_eval(tau)
        out.append(math.exp(reducer(g) - g[-1]))
    return np.array(out)


def karamata_sup_check(L, eps, s_grid):
    """Ratios ``sup_{tau<=s} tau**eps L(tau) / (s**eps L(s))`` on ``s_grid``."""
    return _extremum_ratios(L, eps, s_grid, +1.0, np.max)


def karamata_inf_check(L, eps, s_grid):
    """Ratios ``inf_{tau<=s} tau**-eps L(tau) / (s**-eps L(s))`` on ``s_grid``."""
    return _extremum_ratios(L, eps, s_grid, -1.0, np.min)


def slow_variation_ratios(f, lambdas=(0.5, 2.0, 10.0), exponents=range(3, 9)):
    """Table of ``f(lam*s)/f(s)`` at ``s = 10**j``.

    Returns an array of shape ``(len(lambdas), len(exponents))``.
    """
    s = 10.0 ** np.asarray(list(exponents), dtype=float)
    rows = [np.exp(f.log_eval(lam * s) - f.log_eval(s)) for lam in lambdas]
    return np.array(rows)


def is_slowly_varying(f, lambdas=(0.5, 2.0, 10.0), exponents=range(3, 9), index=0.0,
                      tol=1e-6):
    """Numerical falsification test for regular variation of a given index.

    Passes when, for every ``lam``, ``|f(lam s)/f(s) / lam**index - 1|`` does
    not increase along ``s = 10**j`` and either ends below ``tol`` or shrinks
    over the range.  A constant nonzero deviation fails.
    """
    table = slow_variation_ratios(f, lambdas, exponents)
    target = np.asarray(lambdas, dtype=float)[:, None] ** index
    dev = np.abs(table / target - 1.0)
    monotone = np.all(np.diff(dev, axis=1) <= 1e-12, axis=1)
    shrinking = (dev[:, -1] <= tol) | (dev[:, -1] < (1.0 - 1e-3) * dev[:, 0])
    return bool(np.all(monotone & shrinking))
