"""Riesz potentials, Fourier coefficients and regularity estimators on ``R / pi Z``.

Fourier conventions: ``c_n(nu) = int e^{-2 i n x} d nu(x)`` for measures and
``c_n(f) = int f(x) e^{-2 i n x} d lambda(x)`` for functions, where
``lambda`` is Lebesgue measure normalised to mass one. With these, the
potential ``I_{t,nu}(x) = int d_P(x,y)^t d nu(y)`` has coefficients
``c_n(d_P(0,.)^t) c_n(nu)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Union

import mpmath
import numpy as np
from scipy import integrate
from scipy.special import gammaln

from . import kernels
from .circle import SortedPoints
from .kernels import ExponentError, check_exponent
from .projective import ConfigurationError, arc_halfwidth
from .transfer import GridFunction, GridMeasure

QUAD_LIMIT = 400


# ---------------------------------------------------------------------------
# measure types
# ---------------------------------------------------------------------------

@dataclass
class AtomMeasure:
    """Finite list of weighted points (angles in ``[0, pi)``)."""

    angles: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.angles = np.mod(np.asarray(self.angles, dtype=float), np.pi)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.angles.shape != self.weights.shape:
            raise ValueError("angles and weights differ in shape")

    @classmethod
    def dirac(cls, theta: float) -> "AtomMeasure":
        return cls(np.array([theta]), np.array([1.0]))


@dataclass
class TrigDensity:
    """Density ``1 + sum_k a_k cos(2kx) + b_k sin(2kx)`` with respect to ``lambda``."""

    cos_coeffs: np.ndarray
    sin_coeffs: np.ndarray

    def __post_init__(self):
        self.cos_coeffs = np.asarray(self.cos_coeffs, dtype=float)
        self.sin_coeffs = np.asarray(self.sin_coeffs, dtype=float)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.ones_like(x)
        for k, (a, b) in enumerate(zip(self.cos_coeffs, self.sin_coeffs), start=1):
            out = out + a * np.cos(2 * k * x) + b * np.sin(2 * k * x)
        return out

    def coefficient(self, n: int) -> complex:
        n = int(n)
        if n == 0:
            return 1.0 + 0j
        k = abs(n)
        if k > self.cos_coeffs.size:
            return 0j
        a, b = self.cos_coeffs[k - 1], self.sin_coeffs[k - 1]
        c = 0.5 * (a - 1j * b)
        return c if n > 0 else np.conj(c)


Measure = Union[GridMeasure, AtomMeasure, TrigDensity]


# ---------------------------------------------------------------------------
# potentials and constants
# ---------------------------------------------------------------------------

def _smooth_sin_factor(u):
    """``sin(u) / (u (pi - u))`` on ``[0, pi]`` without removable singularities."""
    u = np.asarray(u, dtype=float)
    left = np.sinc(u / np.pi) / np.where(u < np.pi, np.pi - u, 1.0)
    right = np.sinc((np.pi - u) / np.pi) / np.where(u > 0, u, 1.0)
    return np.where(u <= np.pi / 2, left, right)


def _density_potential(density: Callable, t: float, x: float) -> float:
    # (1/pi) int_0^pi |sin u|^t rho(x - u) du with algebraic end weights
    f = lambda u: _smooth_sin_factor(u) ** t * density(x - u)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(f, 0.0, np.pi, weight="alg", wvar=(t, t),
                                epsabs=1e-14, epsrel=1e-13, limit=QUAD_LIMIT)
    return val / np.pi


def riesz_potential(nu: Measure, t: float, x) -> np.ndarray | float:
    """``I_{t,nu}(x) = int d_P(x, y)^t d nu(y)``.

    Grid measures are uniform within cells and contribute exact cell
    averages of the kernel; densities are integrated adaptively.
    """
    t = check_exponent(t)
    scalar = np.ndim(x) == 0
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if isinstance(nu, GridMeasure):
        out = kernels.potential_of_cells(xs, nu.weights, t)
    elif isinstance(nu, AtomMeasure):
        out = kernels.potential_of_atoms(xs, nu.angles, nu.weights, t)
    elif callable(nu):
        out = np.array([_density_potential(nu, t, float(xi)) for xi in xs])
    else:
        raise TypeError(f"unsupported measure type {type(nu).__name__}")
    return float(out[0]) if scalar else out


def riesz_potential_on_nodes(nu: GridMeasure, t: float) -> GridFunction:
    """Potential of a grid measure at its own nodes (FFT path)."""
    return GridFunction(kernels.potential_on_nodes(nu.weights, check_exponent(t)))


def lambda_constant(t: float) -> float:
    """``C_{lambda,t} = (2/pi) int_0^{pi/2} sin(u)^t du`` by adaptive quadrature."""
    return fourier_coeff_kernel(t, 0, allow_zero=True)


def fourier_coeff_kernel(t: float, n: int, allow_zero: bool = False) -> float:
    """``c_n(d_P(0,.)^t) = (2/pi) int_0^{pi/2} sin(x)^t cos(2 n x) dx``.

    Parameters
    ----------
    allow_zero : bool
        Accept ``t = 0`` (used by :func:`lambda_constant`); otherwise
        ``t`` must lie in ``(-1, 0)``.
    """
    t = float(t)
    if not (-1.0 < t < 0.0 or (allow_zero and t == 0.0)):
        raise ExponentError(f"exponent t={t} outside (-1, 0)")
    n = abs(int(n))
    if t == 0.0:
        return 1.0 if n == 0 else 0.0
    sm = lambda u: np.sinc(u / np.pi) ** t * np.cos(2 * n * u)
    with warnings.catch_warnings():
        # the requested tolerance sits at the roundoff floor
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(sm, 0.0, np.pi / 2, weight="alg", wvar=(t, 0.0),
                                epsabs=1e-15, epsrel=1e-13, limit=QUAD_LIMIT)
    return 2.0 * val / np.pi


def kernel_coefficient_closed_form(t: float, n: int) -> float:
    """Gamma-function expression for :func:`fourier_coeff_kernel`."""
    nu = mpmath.mpf(t) + 1
    n = abs(int(n))
    p = (nu + 2 * n + 1) / 2
    q = (nu - 2 * n + 1) / 2
    val = (-1) ** n * mpmath.pi / (2 ** nu * nu) * mpmath.gamma(p + q) * mpmath.rgamma(p) * mpmath.rgamma(q)
    return float(2 * val / mpmath.pi)


def fourier_coeff_measure(nu: Measure, n: int) -> complex:
    """``c_n(nu)``; grid measures use their nodes (midpoint rule)."""
    n = int(n)
    if isinstance(nu, GridMeasure):
        return complex(np.sum(nu.weights * np.exp(-2j * n * nu.nodes)))
    if isinstance(nu, AtomMeasure):
        return complex(np.sum(nu.weights * np.exp(-2j * n * nu.angles)))
    if isinstance(nu, TrigDensity):
        return complex(nu.coefficient(n))
    raise TypeError(f"unsupported measure type {type(nu).__name__}")


# ---------------------------------------------------------------------------
# G_beta, C_beta, T_beta
# ---------------------------------------------------------------------------

def c_beta(beta: float) -> float:
    """``pi^{-1/2} Gamma(beta/2) / Gamma((1-beta)/2)`` via log-Gamma."""
    if not 0.0 < beta < 1.0:
        raise ConfigurationError("beta must lie in (0, 1)")
    return math.exp(gammaln(beta / 2) - gammaln((1 - beta) / 2)) / math.sqrt(math.pi)


def _cosine_sum_factor(beta):
    """``K`` with ``sum_{n>=1} n^-beta cos(2 pi n s) = K [zeta(1-beta,s) + zeta(1-beta,1-s)]``."""
    beta = mpmath.mpf(beta)
    return (2 * mpmath.pi) ** beta / (4 * mpmath.gamma(beta) * mpmath.cos(mpmath.pi * beta / 2))


def _g_beta_mp(beta, x):
    """``G_beta(x)`` for ``x`` in ``(0, pi)`` through the Hurwitz zeta function."""
    s = mpmath.mpf(x) / mpmath.pi
    b = mpmath.mpf(beta)
    cb = mpmath.sqrt(mpmath.pi) ** -1 * mpmath.gamma(b / 2) / mpmath.gamma((1 - b) / 2)
    return 2 * cb * _cosine_sum_factor(b) * (mpmath.zeta(1 - b, s) + mpmath.zeta(1 - b, 1 - s))


def _g_beta_regular_mp(beta, x):
    """``G_beta(x) - (x/pi)^(beta-1) * G0`` where ``G0`` is the singular amplitude."""
    s = mpmath.mpf(x) / mpmath.pi
    b = mpmath.mpf(beta)
    cb = mpmath.sqrt(mpmath.pi) ** -1 * mpmath.gamma(b / 2) / mpmath.gamma((1 - b) / 2)
    return 2 * cb * _cosine_sum_factor(b) * (mpmath.zeta(1 - b, 1 + s) + mpmath.zeta(1 - b, 1 - s))


def g_beta_singular_amplitude(beta: float) -> float:
    """Coefficient ``A`` in ``G_beta(x) = A (x/pi)^(beta-1) + smooth``; ``A pi^(1-beta) = 1``."""
    b = mpmath.mpf(beta)
    cb = mpmath.sqrt(mpmath.pi) ** -1 * mpmath.gamma(b / 2) / mpmath.gamma((1 - b) / 2)
    return float(2 * cb * _cosine_sum_factor(b))


def g_beta(t: float, x, n_terms: int = 100_000, method: str = "closed"):
    """Kernel ``G_beta = C_beta sum_{n != 0} |n|^-beta e^{2inx}`` with ``beta = t + 1``.

    Parameters
    ----------
    method : {"closed", "partial"}
        ``"closed"`` sums the series exactly through the Hurwitz zeta
        function. ``"partial"`` returns the symmetric cosine partial sum
        with ``n_terms`` terms; its tail is of order
        ``C_beta n_terms^-beta / |sin x|`` and is large for small ``x``
        (see :func:`g_beta_tail_bound`).
    """
    beta = float(t) + 1.0
    cb = c_beta(beta)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if method == "partial":
        n = np.arange(1, int(n_terms) + 1, dtype=float)
        w = n ** -beta
        out = np.array([2 * cb * float(np.dot(w, np.cos(2 * n * xi))) for xi in xs])
    elif method == "closed":
        red = np.mod(xs, np.pi)
        red = np.minimum(red, np.pi - red)
        out = np.array([float(_g_beta_mp(beta, xi)) if xi > 0 else math.inf for xi in red])
    else:
        raise ConfigurationError(f"unknown method {method!r}")
    return float(out[0]) if np.ndim(x) == 0 else out


def g_beta_tail_bound(t: float, x: float, n_terms: int) -> float:
    """Summation-by-parts bound on the cosine tail beyond ``n_terms``."""
    beta = float(t) + 1.0
    s = abs(math.sin(x))
    if s == 0:
        return math.inf
    return 2 * c_beta(beta) * (n_terms + 1) ** -beta / s


def g_beta_coefficient(t: float, n: int) -> float:
    """``c_n(G_beta)`` by quadrature of the closed-form kernel.

    The singular part ``A (x/pi)^t`` is integrated with an algebraic end
    weight and the smooth remainder with plain adaptive quadrature.
    """
    beta = float(t) + 1.0
    n = abs(int(n))
    amp = g_beta_singular_amplitude(beta)
    reg_f = lambda u: float(_g_beta_regular_mp(beta, u)) * math.cos(2 * n * u)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        sing, _ = integrate.quad(lambda u: np.cos(2 * n * u), 0.0, np.pi / 2, weight="alg",
                                 wvar=(t, 0.0), epsabs=1e-15, epsrel=1e-13, limit=QUAD_LIMIT)
        reg, _ = integrate.quad(reg_f, 0.0, np.pi / 2, epsabs=1e-15, epsrel=1e-13, limit=QUAD_LIMIT)
    sing *= amp * math.pi ** -t
    return 2.0 * (sing + reg) / math.pi


@dataclass
class FourierSeries:
    """Coefficients ``c_n`` for ``-M <= n <= M`` (``coeffs[n + M]``)."""

    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.size % 2 != 1:
            raise ValueError("coefficient array must have odd length")

    @property
    def max_index(self) -> int:
        return (self.coeffs.size - 1) // 2

    @property
    def indices(self) -> np.ndarray:
        M = self.max_index
        return np.arange(-M, M + 1)

    def __getitem__(self, n: int) -> complex:
        return complex(self.coeffs[n + self.max_index])

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.exp(2j * np.multiply.outer(x, self.indices)) @ self.coeffs

    def is_real(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.coeffs - np.conj(self.coeffs[::-1]))) <= tol)

    @classmethod
    def from_samples(cls, values, max_index: int) -> "FourierSeries":
        """Coefficients of a function sampled at ``x_j = j pi / L`` (exact for trig polynomials of degree < L/2)."""
        v = np.asarray(values, dtype=float)
        L = v.size
        if L <= 2 * max_index:
            raise ConfigurationError("too few samples for the requested band")
        c = np.fft.fft(v) / L
        idx = np.arange(-max_index, max_index + 1)
        return cls(c[np.mod(idx, L)])

    @classmethod
    def random_real(cls, max_index: int, rng: np.random.Generator, mean: float = 0.0) -> "FourierSeries":
        M = max_index
        pos = rng.normal(size=M) + 1j * rng.normal(size=M)
        c = np.concatenate([np.conj(pos[::-1]), [mean], pos])
        return cls(c)


def t_beta_multiplier(series: FourierSeries, beta: float) -> FourierSeries:
    """``T_beta f = sum |n|^beta c_n e^{2inx}``; ``c_0`` is sent to zero."""
    n = np.abs(series.indices).astype(float)
    scale = np.where(n == 0, 0.0, n ** float(beta))
    return FourierSeries(series.coeffs * scale)


def pairing(f: FourierSeries, g: FourierSeries, samples: int | None = None) -> float:
    """``int f g d lambda`` of two real series, by the trapezoid rule on a fine grid."""
    M = max(f.max_index, g.max_index)
    L = samples or 4 * M + 4
    x = np.arange(L) * np.pi / L
    return float(np.mean(np.real(f.evaluate(x)) * np.real(g.evaluate(x))))


# ---------------------------------------------------------------------------
# injectivity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InjectivityReport:
    potential_discrepancy: float
    coefficient_discrepancy: float
    n_max: int


def injectivity_probe(nu1: Measure, nu2: Measure, t: float, x_nodes, n_max: int = 16) -> InjectivityReport:
    """Largest potential gap over ``x_nodes`` and largest coefficient gap for ``|n| <= n_max``.

    Positive kernel coefficients mean equal potentials force equal
    coefficients: ``|c_n(nu1) - c_n(nu2)| <= |c_n(I1 - I2)| / c_n(kernel)``.
    """
    if not -1.0 < t < 0.0:
        raise ExponentError(f"exponent t={t} outside (-1, 0)")
    p1 = riesz_potential(nu1, t, np.asarray(x_nodes, dtype=float))
    p2 = riesz_potential(nu2, t, np.asarray(x_nodes, dtype=float))
    pd = float(np.max(np.abs(np.asarray(p1) - np.asarray(p2))))
    cd = max(abs(fourier_coeff_measure(nu1, n) - fourier_coeff_measure(nu2, n))
             for n in range(-n_max, n_max + 1))
    return InjectivityReport(pd, float(cd), int(n_max))


def coefficient_bound(potential_tolerance: float, t: float, n_max: int) -> float:
    """``tolerance / min_{|n| <= n_max} c_n(kernel)``."""
    return potential_tolerance / min(fourier_coeff_kernel(t, n) for n in range(0, n_max + 1))


# ---------------------------------------------------------------------------
# Frostman and Hoelder estimators
# ---------------------------------------------------------------------------

DEFAULT_RADII = np.geomspace(1e-3, 1e-1, 9)


@dataclass
class DimensionEstimate:
    value: float
    radii_used: list
    slope_stderr: float
    raw_slope: float = math.nan
    sup_masses: list = field(default_factory=list)


@dataclass
class HolderEstimate:
    value: float
    scales_used: list
    raw_slope: float = math.nan
    saturated: bool = False
    moduli: list = field(default_factory=list)


def _fit_slope(logx: np.ndarray, logy: np.ndarray) -> tuple[float, float]:
    A = np.vstack([logx, np.ones_like(logx)]).T
    coef, res, *_ = np.linalg.lstsq(A, logy, rcond=None)
    slope = float(coef[0])
    if logx.size > 2:
        resid = logy - A @ coef
        s2 = float(resid @ resid) / (logx.size - 2)
        se = math.sqrt(s2 / float(np.sum((logx - logx.mean()) ** 2)))
    else:
        se = math.nan
    return slope, se


def _grid_sup_mass(nu: GridMeasure, r: float, step: float) -> float:
    a = float(arc_halfwidth(r))
    if a >= np.pi / 2:
        return 1.0
    x = np.arange(0.0, np.pi, step)
    edges = np.arange(nu.N + 1) * np.pi / nu.N
    cum = np.concatenate([[0.0], np.cumsum(nu.weights)])

    def G(y):
        k = np.floor(y / np.pi)
        return k * cum[-1] + np.interp(y - k * np.pi, edges, cum)

    return float(np.max(G(x + a) - G(x - a)))


def frostman_dim_estimate(nu, radii=None) -> DimensionEstimate:
    """Slope of ``log sup_x nu(B(x, r))`` against ``log r``.

    ``nu`` may be a :class:`GridMeasure` (cell-uniform, supremum over a grid
    16 times finer than the smallest radius), an :class:`AtomMeasure`, or a
    plain array of sample angles (exact supremum by a sliding window).
    """
    radii = DEFAULT_RADII if radii is None else np.asarray(radii, dtype=float)
    radii = np.sort(radii)
    if radii.size < 3 or radii[-1] / radii[0] < 100 or radii[0] <= 0:
        raise ConfigurationError("radii must contain >= 3 positive values spanning >= 2 decades")
    masses = []
    if isinstance(nu, GridMeasure):
        step = radii[0] / 16
        masses = [_grid_sup_mass(nu, float(r), step) for r in radii]
    else:
        if isinstance(nu, AtomMeasure):
            pts = SortedPoints.build(nu.angles, nu.weights)
        else:
            pts = SortedPoints.build(np.mod(np.asarray(nu, dtype=float), np.pi))
        tot = pts.total
        masses = [pts.sup_arc_mass(float(arc_halfwidth(r)))[0] / tot for r in radii]
    masses = np.asarray(masses)
    slope, se = _fit_slope(np.log(radii), np.log(masses))
    return DimensionEstimate(float(np.clip(slope, 0.0, 1.0)), radii.tolist(), se, slope, masses.tolist())


SATURATION_TOL = 0.02


def holder_exponent_estimate(f: GridFunction, min_cells: int | None = None,
                             max_cells: int | None = None) -> HolderEstimate:
    """Hoelder exponent from the growth of the modulus of continuity.

    ``omega(k h) = max_i |f_{i+k} - f_i|`` (circular) is computed for
    ``k = 2^j`` between ``min_cells`` (default 1) and ``max_cells`` (default
    ``N/8``). The slope is fitted to ``log(omega(2kh) - omega(kh))`` against
    ``log(kh)``. The increments cancel the additive offset that a midpoint
    grid puts into ``omega`` near a cusp; for ``omega = c delta^a`` they
    scale like ``delta^a`` as well. A slope within ``SATURATION_TOL`` of one
    or above, or a constant input, is reported as ``1`` with
    ``saturated=True``.
    """
    v = np.asarray(f.values, dtype=float)
    N = v.size
    if N < 64:
        raise ConfigurationError("need at least 64 grid points")
    kmin = min_cells or 1
    kmax = max_cells or N // 8
    ks = []
    k = 1
    while k <= kmax:
        if k >= kmin:
            ks.append(k)
        k *= 2
    if len(ks) < 4:
        raise ConfigurationError("scale ladder too short")
    h = np.pi / N
    om = np.array([np.max(np.abs(np.roll(v, -k) - v)) for k in ks])
    scales = [k * h for k in ks]
    if np.all(om == 0) or np.ptp(v) == 0:
        return HolderEstimate(1.0, scales, math.nan, True, om.tolist())
    inc = np.diff(om)
    keep = inc > 0
    if keep.sum() < 3:
        raise ConfigurationError("modulus of continuity does not grow across the ladder")
    slope, _ = _fit_slope(np.log(np.asarray(scales[:-1])[keep]), np.log(inc[keep]))
    if slope >= 1.0 - SATURATION_TOL:
        return HolderEstimate(1.0, scales, slope, True, om.tolist())
    return HolderEstimate(float(max(slope, 1e-12)), scales, slope, False, om.tolist())


def lipschitz_difference_test(t: float, x_min: float = 1e-4) -> dict:
    """Difference quotients of ``G_beta - d_P(0,.)^t`` on dyadic points.

    Points are the dyadic numbers ``x_j = 2^-j`` in ``[x_min, pi/2]``.
    Returns the quotients ``q_j = |b(x_j) - b(x_{j+1})| / (x_j - x_{j+1})`` and the ratios
    ``q_{j+1} / q_j``; a non-Lipschitz singular part ``x^t`` would make the
    ratios approach ``2^(1-t) > 2``.
    """
    beta = float(t) + 1.0
    xs = []
    x = 1.0
    while x >= x_min:
        xs.append(x)
        x /= 2
    with mpmath.workdps(40):
        b = [(_g_beta_mp(beta, mpmath.mpf(x)) - mpmath.sin(mpmath.mpf(x)) ** t) for x in xs]
        q = [float(abs(b[j] - b[j + 1]) / (mpmath.mpf(xs[j]) - mpmath.mpf(xs[j + 1])))
             for j in range(len(xs) - 1)]
    q = np.asarray(q)
    ratios = q[1:] / q[:-1]
    return {"points": xs, "quotients": q.tolist(), "ratios": ratios.tolist(),
            "max_quotient": float(q.max()), "max_ratio": float(ratios.max())}
