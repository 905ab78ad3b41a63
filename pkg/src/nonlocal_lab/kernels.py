"""Radially symmetric kernels on periodic grids and their convolution powers.

A kernel lives on ``[-X, X)**n`` sampled at ``M`` points per axis, with the
origin at index ``M // 2``.  Its symbol is the scaled DFT

    J_hat(xi) ~ dx**n * DFT(J)  ~  int J(x) exp(-i x.xi) dx,

stored on the half spectrum returned by ``rfftn``.  Convolution powers are
computed spectrally from ``J_hat**k``.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import special

from . import io
from .errors import FitError, PeriodizationError, ResolutionError
from .regvar import SlowVarying

FAMILIES = ("box", "tent", "gaussian", "stable", "logperturbed", "prescribed", "pathological")
SYMBOL_FAMILIES = ("stable", "logperturbed", "prescribed")
FAMILY_PARAMS = {
    "box": {"width"},
    "tent": {"half_width"},
    "gaussian": {"variance"},
    "stable": {"sigma", "A"},
    "logperturbed": {"sigma", "mu", "A"},
    "prescribed": {"sigma", "gamma", "L", "A"},
    "pathological": set(),
}

WRAP_TOL = 1e-6
MIN_CELLS = 4
NONNEG_TOL = 1e-12


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on ``[-X, X)**n`` with ``M`` points per axis."""

    n: int
    X: float
    M: int

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError("only dimensions 1 and 2 are supported")
        if self.M < 8 or self.M & (self.M - 1):
            raise ValueError("M must be a power of two >= 8")
        if not self.X > 0:
            raise ValueError("X must be positive")

    @classmethod
    def from_spacing(cls, n, dx, M):
        """Grid with spacing ``dx``; handy to align cell edges with a support."""
        return cls(n, 0.5 * M * dx, M)

    @property
    def dx(self):
        return 2.0 * self.X / self.M

    @property
    def shape(self):
        return (self.M,) * self.n

    @property
    def cell(self):
        return self.dx**self.n

    def axis(self):
        return -self.X + self.dx * np.arange(self.M)

    def coords(self):
        """Coordinate arrays (one per axis), broadcastable to ``shape``."""
        x = self.axis()
        if self.n == 1:
            return (x,)
        return (x[:, None], x[None, :])

    def radius(self):
        c = self.coords()
        return np.sqrt(sum(ci**2 for ci in c)) if self.n > 1 else np.abs(c[0])

    def sup_radius(self):
        """max_i |x_i| on the grid (used for shell masses)."""
        c = self.coords()
        if self.n == 1:
            return np.abs(c[0])
        return np.maximum(np.abs(c[0]), np.abs(c[1]))

    def frequencies(self):
        """Angular frequencies on the half spectrum, broadcastable."""
        k_full = 2.0 * np.pi * np.fft.fftfreq(self.M, d=self.dx)
        k_half = 2.0 * np.pi * np.fft.rfftfreq(self.M, d=self.dx)
        if self.n == 1:
            return (k_half,)
        return (k_full[:, None], k_half[None, :])

    def freq_radius(self):
        f = self.frequencies()
        return np.sqrt(sum(fi**2 for fi in f)) if self.n > 1 else np.abs(f[0])

    @property
    def dxi(self):
        return np.pi / self.X

    # transforms between centred samples and the half spectrum
    def forward(self, samples):
        return self.cell * np.fft.rfftn(np.fft.ifftshift(samples))

    def inverse(self, spectrum):
        return np.fft.fftshift(np.fft.irfftn(spectrum, s=self.shape, axes=tuple(range(self.n)))) / self.cell

    def integrate(self, values):
        return self.cell * float(np.sum(values))

    def lp_norm(self, u, p):
        if p == np.inf:
            return float(np.max(np.abs(u)))
        return (self.cell * float(np.sum(np.abs(u) ** p))) ** (1.0 / p)

    def header(self):
        return {"dim": self.n, "X": self.X, "M": self.M}


@dataclass
class GridKernel:
    """Sampled kernel with its cached symbol and norms."""

    grid: Grid
    samples: np.ndarray
    symbol: np.ndarray
    family: str = "custom"
    params: dict = field(default_factory=dict)
    mass_deficit: float = 0.0  # mass lost outside the box before normalizing
    advisories: list = field(default_factory=list)

    def __post_init__(self):
        self.samples.setflags(write=False)
        self.symbol.setflags(write=False)

    @property
    def n(self):
        return self.grid.n

    @property
    def X(self):
        return self.grid.X

    @property
    def M(self):
        return self.grid.M

    @property
    def l1_norm(self):
        return self.grid.integrate(np.abs(self.samples))

    @property
    def sup_norm(self):
        return float(np.max(np.abs(self.samples)))

    @property
    def nonnegative(self):
        return bool(np.min(self.samples) >= -NONNEG_TOL * np.max(self.samples))

    @property
    def signed(self):
        return not self.nonnegative

    @property
    def symbol_at_zero(self):
        return float(self.symbol.flat[0].real)

    def normalize(self):
        """Kernel rescaled so that its integral (and symbol at 0) is 1."""
        mass = self.grid.integrate(self.samples)
        return GridKernel(self.grid, self.samples / mass, self.symbol / mass,
                          self.family, dict(self.params), self.mass_deficit,
                          list(self.advisories))

    @property
    def characteristic_scale(self):
        return _characteristic_scale(self.family, self.params)

    def flattening_time(self):
        """Time beyond which the lowest nonzero grid mode stops the decay.

        Estimated as ``1/(A xi_min**sigma)`` from the small-frequency symbol.
        """
        one_minus = 1.0 - _symbol_line(self)[1][1]
        if one_minus <= 0:
            return math.inf
        return 1.0 / one_minus

    # -- serialization ------------------------------------------------------
    def descriptor(self):
        params = {}
        for key, val in self.params.items():
            params[key] = val.to_descriptor() if isinstance(val, SlowVarying) else val
        d = {"family": self.family, "n": self.n, "X": self.X, "M": self.M}
        d.update(params)
        return d

    def save(self, path):
        header = self.grid.header()
        header.update({"family": self.family, "params": self.descriptor()})
        io.save_array(path, self.samples, header)

    @classmethod
    def load(cls, path):
        samples, header = io.load_array(path)
        grid = Grid(int(header["dim"]), float(header["X"]), int(header["M"]))
        params = {k: v for k, v in header["params"].items()
                  if k not in ("family", "n", "X", "M")}
        if isinstance(params.get("L"), dict):
            params["L"] = SlowVarying.from_descriptor(params["L"])
        return from_samples(grid, samples, header["family"], params)


def _symbol_line(J):
    """Symbol along the first frequency axis (xi_2 = 0 for n = 2)."""
    xi = np.abs(J.grid.frequencies()[-1]).ravel()
    sym = J.symbol[0] if J.n == 2 else J.symbol
    return xi, np.real(np.asarray(sym)).ravel()


def from_samples(grid, samples, family="custom", params=None):
    """Wrap real samples (centred layout) into a :class:`GridKernel`."""
    samples = np.array(samples, dtype=float)
    if samples.shape != grid.shape:
        raise ValueError(f"samples shape {samples.shape} does not match grid {grid.shape}")
    sym = grid.forward(samples)
    return GridKernel(grid, samples, _realify(sym), family, dict(params or {}))


def _realify(sym):
    # even real kernels have real symbols; keep only the real part then
    if np.max(np.abs(sym.imag)) <= 1e-10 * max(np.max(np.abs(sym.real)), 1e-300):
        return np.ascontiguousarray(sym.real)
    return sym


# -- kernel families -------------------------------------------------------

def _box_cdf(x, width):
    return np.clip(x, -0.5 * width, 0.5 * width) / width


def _tent_cdf(x, a):
    x = np.clip(x, -a, a)
    return np.where(x < 0, (x + a) ** 2 / (2 * a * a), 1.0 - (a - x) ** 2 / (2 * a * a))


def _cell_average(grid, cdf):
    """Per-axis cell averages of a 1-d density given by its CDF."""
    x = grid.axis()
    h = grid.dx
    prof = (cdf(x + 0.5 * h) - cdf(x - 0.5 * h)) / h
    if grid.n == 1:
        return prof
    return np.outer(prof, prof)


def _characteristic_scale(family, params):
    if family == "box":
        return params.get("width", 1.0)
    if family == "tent":
        return params.get("half_width", 1.0)
    if family == "gaussian":
        return math.sqrt(params.get("variance", 1.0))
    if family in SYMBOL_FAMILIES:
        return params.get("A", 1.0) ** (1.0 / params["sigma"])
    return None


def stable_symbol(xi, sigma, A=1.0):
    return np.exp(-A * np.abs(xi) ** sigma)


def log_perturbed_symbol(xi, sigma, mu, A=1.0):
    r = np.abs(np.asarray(xi, dtype=float))
    out = np.ones_like(r)
    pos = r > 0
    out[pos] = np.exp(-A * r[pos] ** sigma * np.log(math.e + 1.0 / r[pos]) ** mu)
    return out


def prescribed_symbol(xi, sigma, gamma, L, A=1.0):
    """``exp(-A |xi|**sigma L(|xi|**-gamma))`` with ``L`` clamped at its domain start."""
    r = np.abs(np.asarray(xi, dtype=float))
    out = np.ones_like(r)
    pos = r > 0
    arg = np.maximum(r[pos] ** (-gamma), L.domain_start)
    out[pos] = np.exp(-A * r[pos] ** sigma * L.eval(arg))
    return out


def symbol_function(family, params):
    """Closed-form symbol as a function of |xi| for symbol-built families."""
    A = params.get("A", 1.0)
    if family == "stable":
        return lambda r: stable_symbol(r, params["sigma"], A)
    if family == "logperturbed":
        return lambda r: log_perturbed_symbol(r, params["sigma"], params["mu"], A)
    if family == "prescribed":
        return lambda r: prescribed_symbol(r, params["sigma"], params["gamma"], params["L"], A)
    raise ValueError(f"{family} is not a symbol-built family")


def make_kernel(family, n=1, X=None, M=2**12, dx=None, lattice=False, **params):
    """Build a normalized kernel of the given family.

    Parameters
    ----------
    family : str
        ``box`` (``width``), ``tent`` (``half_width``), ``gaussian``
        (``variance``), ``stable`` (``sigma``, ``A``), ``logperturbed``
        (``sigma``, ``mu``, ``A``), ``prescribed`` (``sigma``, ``gamma``,
        ``L``, ``A``) or ``pathological``.
    n, X, M : grid dimension, half width and points per axis.  ``dx`` may be
        given instead of ``X``.
    lattice : bool
        Symbol-built families only: accept a grid coarser than the kernel
        scale.  The result is the lattice kernel whose DFT equals the symbol
        at every grid frequency; its spatial profile is not resolved.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown kernel family {family!r}")
    unknown = set(params) - FAMILY_PARAMS[family]
    if unknown:
        raise ValueError(f"unknown parameters for {family} kernel: {sorted(unknown)}")
    if (X is None) == (dx is None):
        raise ValueError("give exactly one of X and dx")
    grid = Grid(n, X, M) if X is not None else Grid.from_spacing(n, dx, M)
    advisories = []

    if lattice and family not in SYMBOL_FAMILIES:
        raise ValueError("lattice=True only applies to symbol-built families")
    scale = _characteristic_scale(family, params)
    if lattice and scale is not None and scale < MIN_CELLS * grid.dx:
        advisories.append(f"lattice kernel: scale {scale:g} below {MIN_CELLS} cells")
    elif scale is not None and scale < MIN_CELLS * grid.dx:
        raise ResolutionError(
            f"{family} kernel scale {scale:g} is below {MIN_CELLS} grid cells (dx={grid.dx:g})"
        )

    if family in SYMBOL_FAMILIES:
        if "sigma" not in params:
            raise ValueError(f"{family} kernel needs sigma")
        if not 0 < params["sigma"] <= 2:
            raise ValueError("sigma must lie in (0, 2]")
        params.setdefault("A", 1.0)
        if family == "logperturbed":
            params.setdefault("mu", 0.0)
        if family == "prescribed":
            if not isinstance(params.get("L"), SlowVarying):
                raise ValueError("prescribed kernel needs a SlowVarying L")
            if "gamma" not in params or not params["gamma"] > 0:
                raise ValueError("prescribed kernel needs gamma > 0")
        sym = symbol_function(family, params)(grid.freq_radius())
        samples = grid.inverse(sym)
        if family == "stable" and params["sigma"] < 2:
            advisories.append("heavy tail: kernel is the periodization of the stable law")
        if family != "stable" and params["sigma"] < 2:
            advisories.append("heavy tail: truncation mass not checked in closed form")
        if lattice:
            params["lattice"] = True
        return GridKernel(grid, samples, np.ascontiguousarray(sym), family, dict(params), 0.0,
                          advisories)

    if family == "box":
        w = params.setdefault("width", 1.0)
        if w / 2 > grid.X:
            raise ResolutionError("box support exceeds the grid")
        samples = _cell_average(grid, lambda x: _box_cdf(x, w))
    elif family == "tent":
        a = params.setdefault("half_width", 1.0)
        if a > grid.X:
            raise ResolutionError("tent support exceeds the grid")
        samples = _cell_average(grid, lambda x: _tent_cdf(x, a))
    elif family == "gaussian":
        var = params.setdefault("variance", 1.0)
        tail = special.erfc(grid.X / math.sqrt(2 * var)) * grid.n
        if tail > 1e-6:
            raise ResolutionError(f"gaussian mass outside the box is {tail:.2e} > 1e-6")
        r2 = grid.radius() ** 2
        samples = np.exp(-r2 / (2 * var)) / (2 * np.pi * var) ** (n / 2)
    else:  # pathological
        r = grid.radius()
        cap = 1.0 / (grid.dx**n * (1.0 + math.log(grid.dx) ** 2))
        samples = np.full(grid.shape, cap)
        pos = r > 0
        samples[pos] = np.minimum(1.0 / (r[pos] ** n * (1.0 + np.log(r[pos]) ** 2)), cap)
        advisories.append("log tail: mass outside the box decays like 1/ln X")

    exact_mass = 2 * np.pi if (family == "pathological" and n == 1) else 1.0
    mass = grid.integrate(samples)
    J = from_samples(grid, samples, family, params)
    J.mass_deficit = exact_mass - mass if family == "pathological" and n == 1 else 0.0
    J.advisories = advisories
    return J.normalize()


def kernel_from_descriptor(d):
    """Build a kernel from a plain dict such as ``GridKernel.descriptor()``.

    Recognised keys: ``family``, ``n``, ``M``, exactly one of ``X`` / ``dx``,
    ``lattice`` and the family parameters; ``L`` may be a descriptor dict.
    """
    d = dict(d)
    try:
        family = d.pop("family")
    except KeyError:
        raise ValueError("kernel descriptor needs 'family'") from None
    kw = {k: d.pop(k) for k in ("n", "M", "X", "dx", "lattice") if k in d}
    if isinstance(d.get("L"), dict):
        d["L"] = SlowVarying.from_descriptor(d["L"])
    return make_kernel(family, **kw, **d)


def lp_norm_under_refinement(family, Ms, X, p, n=1, **params):
    """L^p norm of the normalized kernel for a sequence of grid sizes."""
    out = []
    for M in Ms:
        J = make_kernel(family, n=n, X=X, M=M, **params)
        out.append(J.grid.lp_norm(J.samples, p))
    return np.array(out)


# -- convolution powers ----------------------------------------------------

@dataclass
class ConvolutionPower:
    base: GridKernel
    k: int
    samples: np.ndarray
    sup_norm: float
    l1_norm: float
    wraparound_estimate: float


def _power_samples(J, k):
    if k == 1:
        return J.samples
    return J.grid.inverse(J.symbol**k)


def shell_mass(grid, samples, radius):
    return grid.integrate(np.abs(samples)[grid.sup_radius() > radius])


def wraparound_estimate(J, k):
    """Squared shell mass beyond X/2 of ``J_ceil(k/2)``."""
    half = _power_samples(J, max(1, (k + 1) // 2))
    return shell_mass(J.grid, half, 0.5 * J.X) ** 2


def k_max(J, wrap_tol=WRAP_TOL, cap=2**20):
    """Largest k whose wrap-around estimate stays below ``wrap_tol``."""
    if wraparound_estimate(J, 2) > wrap_tol:
        return 1
    lo, hi = 2, 4
    while hi <= cap and wraparound_estimate(J, hi) <= wrap_tol:
        lo, hi = hi, hi * 2
    if hi > cap:
        return cap
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if wraparound_estimate(J, mid) <= wrap_tol:
            lo = mid
        else:
            hi = mid
    return lo


def convolution_power(J, k, wrap_tol=WRAP_TOL):
    """The k-fold convolution ``J * ... * J`` computed from ``J_hat**k``.

    Raises :class:`PeriodizationError` when the wrap-around estimate
    exceeds ``wrap_tol``.
    """
    if int(k) != k or k < 1:
        raise ValueError("k must be a positive integer")
    k = int(k)
    est = 0.0 if k == 1 else wraparound_estimate(J, k)
    if est > wrap_tol:
        raise PeriodizationError(
            f"k={k} wraps around the periodic grid (estimate {est:.2e} > {wrap_tol:.1e})",
            estimate=est, k_max=k_max(J, wrap_tol),
        )
    s = _power_samples(J, k)
    return ConvolutionPower(J, k, s, float(np.max(np.abs(s))),
                            J.grid.integrate(np.abs(s)), est)


def power_norms(J, ks, p=np.inf, u0=None):
    """``||J_k||_p`` (or ``||J^k u0||_p`` when ``u0`` is given) for sorted ``ks``.

    Powers are formed incrementally on the spectrum, one inverse FFT per k.
    """
    ks = np.asarray(ks, dtype=int)
    if np.any(np.diff(ks) <= 0) or ks[0] < 1:
        raise ValueError("ks must be increasing positive integers")
    spec = J.grid.forward(u0) if u0 is not None else np.ones_like(J.symbol)
    out = np.empty(len(ks))
    prev = 0
    powered = spec.astype(np.result_type(J.symbol, spec), copy=True)
    for i, k in enumerate(ks):
        step = k - prev
        powered = powered * (J.symbol**step)
        prev = k
        out[i] = J.grid.lp_norm(J.grid.inverse(powered), p)
    return out


# -- sharp Young / Brascamp-Lieb -------------------------------------------

def _x_pow_inv_x(x):
    if math.isinf(x):
        return 1.0
    return x ** (1.0 / x)


def young_constant(p):
    """Sharp Young constant ``C_p = (p**(1/p) / q**(1/q))**(1/2)``, 1/p+1/q = 1."""
    if not p >= 1:
        raise ValueError("p must be >= 1")
    if p == 1:
        q = math.inf
    elif math.isinf(p):
        q = 1.0
    else:
        q = p / (p - 1.0)
    return math.sqrt(_x_pow_inv_x(p) / _x_pow_inv_x(q))


def entropy_integral(J):
    """``int |J| ln|J| dx`` with ``0 ln 0 = 0``."""
    a = np.abs(J.samples)
    pos = a > 0
    val = J.grid.cell * float(np.sum(a[pos] * np.log(a[pos])))
    return val if np.isfinite(val) else math.inf


@dataclass
class SharpYoungBound:
    bound: float
    limiting: float
    k: int


def sharp_young_bound(J, k, gamma_probe=1.0):
    """Sup-norm bound on ``J_k`` from the sharp Young inequality.

    ``bound = (e/k)**(n/2) * (int |J|**(k/(k-1)))**(k-1)`` (for k = 1 the
    limit ``e**(n/2) ||J||_inf``), and the limiting form
    ``e**(n/2) exp(gamma_probe * int |J| ln|J|) k**(-n/2)``.
    """
    if int(k) != k or k < 1:
        raise ValueError("k must be a positive integer")
    n = J.n
    a = np.abs(J.samples)
    if k == 1:
        bound = math.exp(n / 2) * float(np.max(a))
    else:
        p = k / (k - 1.0)
        pos = a[a > 0]
        # (k-1) * log(int a**p) computed via log-sum-exp
        logs = p * np.log(pos)
        m = np.max(logs)
        log_int = m + math.log(np.sum(np.exp(logs - m))) + n * math.log(J.grid.dx)
        log_bound = 0.5 * n * (1.0 - math.log(k)) + (k - 1) * log_int
        bound = math.exp(log_bound) if np.isfinite(log_bound) else math.inf
    H = entropy_integral(J)
    limiting = math.exp(n / 2 + gamma_probe * H) * k ** (-n / 2) if np.isfinite(H) else math.inf
    return SharpYoungBound(bound, limiting, int(k))


# -- symbol expansion --------------------------------------------------------

@dataclass
class SymbolExpansion:
    A: float
    sigma: float
    mu: float
    gamma: float
    fit_residual: float
    model: str = "power"
    band: tuple = ()

    def one_minus_symbol(self, xi, L=None):
        xi = np.asarray(xi, dtype=float)
        base = self.A * xi**self.sigma
        if self.model == "prescribed":
            return base * L.eval(np.maximum(xi ** (-self.gamma), L.domain_start))
        return base * _log_factor(xi) ** self.mu


def _log_factor(xi):
    # ln(e + 1/xi): same leading behaviour as ln(1/xi), matches logperturbed kernels
    return np.log(math.e + 1.0 / xi)


MODELS = ("power", "powerlog", "prescribed")


def estimate_symbol_expansion(J, band, model="power", L=None, gamma=None, min_samples=16):
    """Least-squares fit of ``ln(1 - J_hat)`` on the frequency band.

    ``power``: ``ln A + sigma ln xi``; ``powerlog`` adds ``mu ln ln(e + 1/xi)``;
    ``prescribed`` subtracts ``ln L(xi**-gamma)`` and fits ``A, sigma``.
    """
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}")
    lo, hi = band
    if not (0 < lo < hi < 1):
        raise FitError("fit band must satisfy 0 < xi_lo < xi_hi < 1")
    xi, sym = _symbol_line(J)
    sel = (xi >= lo) & (xi <= hi)
    if np.count_nonzero(sel) < min_samples:
        raise FitError(
            f"only {np.count_nonzero(sel)} frequencies in band; need {min_samples} (enlarge X)"
        )
    xi, one_minus = xi[sel], 1.0 - sym[sel]
    if np.any(one_minus <= 0):
        raise FitError("1 - J_hat is not positive on the band")
    y = np.log(one_minus)
    cols = [np.ones_like(xi), np.log(xi)]
    mu = 0.0
    g = 0.0
    if model == "powerlog":
        cols.append(np.log(_log_factor(xi)))
    elif model == "prescribed":
        if L is None or gamma is None:
            raise ValueError("prescribed model needs L and gamma")
        g = gamma
        y = y - L.log_eval(np.maximum(xi ** (-gamma), L.domain_start))
    coef, *_ = np.linalg.lstsq(np.column_stack(cols), y, rcond=None)
    A = math.exp(coef[0])
    sigma = float(coef[1])
    if model == "powerlog":
        mu = float(coef[2])
    est = SymbolExpansion(A, sigma, mu, g, 0.0, model, (lo, hi))
    recon = est.one_minus_symbol(xi, L)
    est.fit_residual = float(np.max(np.abs(recon - one_minus)))
    return est
