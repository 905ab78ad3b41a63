"""Green operator of ``u_t = J * u - chi0 u`` on a periodic grid.

Two independent routes:

* ``solve_spectral``: ``u_hat(t) = exp((J_hat - chi0) t) u0_hat``.
* ``solve_series``: ``u(t) = exp(-chi0 t) sum_k t**k/k! J^k u0`` with one
  FFT convolution per term, truncated by a rigorous Poisson tail bound.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import special, stats

from . import io
from .errors import CostError
from .kernels import Grid

T_SERIES_MAX = 200.0
NORMS = (1, 2, np.inf)
TIME_RATIO = 2.0 ** 0.25


@dataclass
class InitialData:
    grid: Grid
    u: np.ndarray
    label: str = "custom"

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        if self.u.shape != self.grid.shape:
            raise ValueError("initial data does not match the grid")
        vals = (self.l1_norm, self.sup_norm, self.fourier_l1)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("initial data norms must be finite")

    @property
    def l1_norm(self):
        return self.grid.lp_norm(self.u, 1)

    @property
    def sup_norm(self):
        return self.grid.lp_norm(self.u, np.inf)

    @property
    def mass(self):
        return self.grid.integrate(self.u)

    @property
    def spectrum(self):
        return self.grid.forward(self.u)

    @property
    def fourier_l1(self):
        """Trapezoid L1 norm of the discrete symbol over the full spectrum."""
        g = self.grid
        full = g.cell * np.fft.fftn(np.fft.ifftshift(self.u))
        return float(np.sum(np.abs(full))) * g.dxi**g.n

    @classmethod
    def gaussian(cls, grid, width=1.0, mass=1.0):
        r2 = grid.radius() ** 2
        u = mass * np.exp(-r2 / (2 * width**2)) / (2 * np.pi * width**2) ** (grid.n / 2)
        return cls(grid, u, f"gaussian(width={width})")

    @classmethod
    def box(cls, grid, width=1.0):
        x = grid.coords()
        inside = np.ones(grid.shape, dtype=bool)
        for xi in x:
            inside = inside & (np.abs(xi) < 0.5 * width + 1e-12)
        u = inside / (grid.integrate(inside.astype(float)))
        return cls(grid, u.astype(float), f"box(width={width})")

    @classmethod
    def spike(cls, grid, mass=1.0):
        """One-cell impulse; only L1, its discrete symbol grows with M."""
        u = np.zeros(grid.shape)
        u[(grid.M // 2,) * grid.n] = mass / grid.cell
        return cls(grid, u, "spike")

    def descriptor(self):
        return {"label": self.label}

    @classmethod
    def from_descriptor(cls, grid, d):
        """``{"kind": "gaussian" | "box" | "spike", ...}`` on ``grid``."""
        d = dict(d)
        kind = d.pop("kind", None)
        allowed = {"gaussian": {"width", "mass"}, "box": {"width"}, "spike": {"mass"}}
        if kind not in allowed:
            raise ValueError(f"unknown initial data kind {kind!r}")
        unknown = set(d) - allowed[kind]
        if unknown:
            raise ValueError(f"unknown fields for {kind} initial data: {sorted(unknown)}")
        return getattr(cls, kind)(grid, **d)


@dataclass
class Snapshot:
    t: float
    u: np.ndarray
    method: str
    grid: Grid
    norms: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.norms:
            self.norms = {p: self.grid.lp_norm(self.u, p) for p in NORMS}

    def save(self, path):
        header = self.grid.header()
        header.update({"t": self.t, "method": self.method, "family": "snapshot", "params": {}})
        io.save_array(path, self.u, header)


def _check(J, u0):
    if J.grid != u0.grid:
        raise ValueError(f"grid mismatch: kernel {J.grid} vs initial data {u0.grid}")


def solve_spectral(J, u0, chi0, t):
    """Solution at time ``t`` by exponentiating the symbol."""
    _check(J, u0)
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return Snapshot(0.0, u0.u.copy(), "spectral", u0.grid)
    return Snapshot(float(t), _spectral_field(J, u0.spectrum, chi0, t), "spectral", u0.grid)


def _spectral_field(J, u0_hat, chi0, t):
    return J.grid.inverse(np.exp((J.symbol - chi0) * t) * u0_hat)


def series_terms_needed(J, chi0, t, tol):
    """Smallest K with ``exp(-chi0 t) sum_{k>K} (t a)^k / k! <= tol``, ``a = ||J||_1``."""
    a = J.l1_norm
    lam = a * t
    shift = (a - chi0) * t
    k = int(math.ceil(lam + 6.0 * math.sqrt(lam * math.log(1.0 / tol)) + 10))
    while stats.poisson.logsf(k, lam) + shift > math.log(tol):
        k = int(k * 1.25) + 1
    while k > 0 and stats.poisson.logsf(k - 1, lam) + shift <= math.log(tol):
        k -= 1
    return k


def solve_series(J, u0, chi0, t, tol=1e-12, t_max=T_SERIES_MAX):
    """Solution at time ``t`` by summing the exponential series of ``J``.

    The tail after ``K`` terms is bounded by Young's inequality,
    ``||J^k u0||_inf <= ||J||_1**k ||u0||_inf``; ``K`` makes that bound at
    most ``tol * ||u0||_inf``.
    """
    _check(J, u0)
    if t < 0:
        raise ValueError("t must be non-negative")
    if t > t_max:
        raise CostError(f"t={t} exceeds the series limit {t_max}; use solve_spectral")
    g = J.grid
    if t == 0:
        return Snapshot(0.0, u0.u.copy(), "series", g)
    K = series_terms_needed(J, chi0, t, tol)
    ks = np.arange(K + 1)
    log_w = -chi0 * t + ks * math.log(t) - special.gammaln(ks + 1.0)
    # work in the unshifted FFT layout to avoid shifting every term
    v = np.fft.ifftshift(u0.u)
    acc = math.exp(log_w[0]) * v
    Jhat = J.symbol
    for k in range(1, K + 1):
        v = np.fft.irfftn(Jhat * np.fft.rfftn(v), s=g.shape, axes=tuple(range(g.n)))
        acc = acc + math.exp(log_w[k]) * v
    return Snapshot(float(t), np.fft.fftshift(acc), "series", g)


def leading_terms(J, u0, chi0, t, N):
    """``exp(-chi0 t) sum_{k<N} t**k/k! J^k u0``."""
    g = J.grid
    acc = np.zeros(g.shape)
    v = u0.u
    for k in range(N):
        if k > 0:
            v = g.inverse(J.symbol * g.forward(v))
        logw = -chi0 * t + (k * math.log(t) if t > 0 else (0.0 if k == 0 else -np.inf)) \
            - special.gammaln(k + 1.0)
        acc = acc + math.exp(logw) * v
    return acc


def refined_remainder(J, u0, chi0, t, N):
    """``u(t)`` minus its first ``N`` series terms."""
    if not 0 <= N <= 64:
        raise ValueError("N must lie in [0, 64]")
    full = solve_spectral(J, u0, chi0, t)
    if N == 0:
        return Snapshot(full.t, full.u, "remainder", full.grid)
    return Snapshot(full.t, full.u - leading_terms(J, u0, chi0, t, N), "remainder", full.grid)


def time_grid(t0=1.0, t1=1e4, ratio=TIME_RATIO):
    """Geometric times ``t0 * ratio**j`` up to ``t1``."""
    n = int(math.floor(math.log(t1 / t0) / math.log(ratio) + 1e-9))
    return t0 * ratio ** np.arange(n + 1)


@dataclass
class NormTable:
    t: np.ndarray
    norms: dict  # p -> array over t
    method: str = "spectral"

    def rows(self):
        for p in sorted(self.norms, key=lambda v: (v == np.inf, v)):
            for ti, v in zip(self.t, self.norms[p]):
                yield (ti, self.method, "inf" if p == np.inf else int(p), v)

    def write_csv(self, path):
        io.write_csv(path, ["t", "method", "p", "norm"], self.rows())

    def __getitem__(self, p):
        return self.norms[p]


def track_norms(J, u0, chi0, times, ps=NORMS, method="spectral", tol=1e-12):
    """Lp norms of the solution along ``times``.

    ``method='series'`` is only allowed while every time stays below the
    series limit.
    """
    _check(J, u0)
    times = np.asarray(times, dtype=float)
    out = {p: np.empty(len(times)) for p in ps}
    u0_hat = u0.spectrum
    for i, t in enumerate(times):
        if method == "series":
            u = solve_series(J, u0, chi0, t, tol).u
        elif t == 0:
            u = u0.u
        else:
            u = _spectral_field(J, u0_hat, chi0, t)
        for p in ps:
            out[p][i] = J.grid.lp_norm(u, p)
    return NormTable(times, out, method)
