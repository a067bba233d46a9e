"""Monte Carlo estimators: Lyapunov exponent, ``k(t)``, rate tables.

Conventions
-----------
* ``k_hat(t) = (1/n) log mean |g|^t`` over products of length ``n``; the
  mean is accumulated in log space so ``|t| n alpha_bar`` may exceed the
  float range.
* Rate tables bin each product by the nearest multiple of ``epsilon`` to
  ``(1/n) log |g|`` and count, for each ``gamma``, the mass of products
  whose contracting direction ``omega_-(g)`` (or ``upsilon_+(g)`` for the
  dual table) lies within ``exp(-n (gamma - epsilon) alpha)`` of ``x``.
  The supremum over ``x`` is either taken over a midpoint grid or exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .circle import SortedPoints
from .measures import (
    MatrixMeasure,
    ProductBatch,
    check_count,
    check_seed,
    enumerate_batch,
    sample_batch,
)
from .projective import ConfigurationError, arc_halfwidth

NEG_INF = float("-inf")


class EstimatorError(RuntimeError):
    """Raised when an estimator has no usable data."""


# ---------------------------------------------------------------------------
# Lyapunov exponent and k(t)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LyapunovEstimate:
    value: float
    std_err: float
    n: int
    samples: int


def estimate_lyapunov(mu: MatrixMeasure, n: int, samples: int, seed: int,
                      threads: int = 1, batch: ProductBatch | None = None) -> LyapunovEstimate:
    """Mean of ``(1/n) log |g|`` over i.i.d. products with its standard error."""
    n = check_count(n, "n")
    samples = check_count(samples, "samples", 2)
    if batch is None:
        batch = sample_batch(mu, n, samples, seed, threads, directions=False)
    x = batch.log_norm / n
    if np.ptp(x) == 0.0:
        return LyapunovEstimate(float(x[0]), 0.0, n, x.size)
    return LyapunovEstimate(float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size)), n, x.size)


def bracket_side(t: float) -> str:
    """Which side of the limit ``k(t)`` a finite-``n`` value sits on."""
    if t < 0:
        return "lower"
    if t > 0:
        return "upper"
    return "exact"


def kt_from_log_norms(log_norm: np.ndarray, t: float, n: int, weights=None) -> tuple[float, float]:
    """``(k_hat, std_err)`` from ``log |g|`` values."""
    if t == 0:
        return 0.0, 0.0
    z = t * np.asarray(log_norm, dtype=float)
    if not np.all(np.isfinite(z)):
        raise EstimatorError("degenerate sample")
    if weights is None:
        lse = logsumexp(z) - math.log(z.size)
        w = np.exp(z - z.max())
        m = w.mean()
        if not np.isfinite(lse) or m == 0:
            raise EstimatorError("degenerate sample")
        se = w.std(ddof=1) / math.sqrt(w.size) / m if w.size > 1 else 0.0
        return float(lse / n), float(se / n)
    lse = logsumexp(z, b=weights)
    if not np.isfinite(lse):
        raise EstimatorError("degenerate sample")
    return float(lse / n), 0.0


def estimate_kt(mu: MatrixMeasure, t: float, n: int, samples: int, seed: int,
                threads: int = 1, batch: ProductBatch | None = None) -> tuple[float, float, str]:
    """``(k_hat, std_err, bracket_side)`` at a single ``t``."""
    samples = check_count(samples, "samples", 2)
    if batch is None:
        batch = sample_batch(mu, check_count(n, "n"), samples, seed, threads, directions=False)
    k, se = kt_from_log_norms(batch.log_norm, float(t), batch.n, batch.weights)
    return k, se, bracket_side(float(t))


@dataclass
class KtCurve:
    t_values: np.ndarray
    k_hat: np.ndarray
    std_err: np.ndarray
    n_used: int
    samples_used: int
    bracket_side: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.t_values = np.asarray(self.t_values, dtype=float)
        self.k_hat = np.asarray(self.k_hat, dtype=float)
        self.std_err = np.asarray(self.std_err, dtype=float)
        if not self.bracket_side:
            self.bracket_side = [bracket_side(t) for t in self.t_values]


def estimate_kt_curve(mu: MatrixMeasure, t_values, n: int, samples: int, seed: int,
                      threads: int = 1, batch: ProductBatch | None = None) -> KtCurve:
    """``k_hat`` on a grid of ``t`` values, all from one set of products."""
    samples = check_count(samples, "samples", 2)
    if batch is None:
        batch = sample_batch(mu, check_count(n, "n"), samples, seed, threads, directions=False)
    ts = np.asarray(t_values, dtype=float)
    vals = [kt_from_log_norms(batch.log_norm, float(t), batch.n, batch.weights) for t in ts]
    return KtCurve(ts, [v[0] for v in vals], [v[1] for v in vals], batch.n, batch.size)


def extrapolate_kt(mu: MatrixMeasure, t: float, n_ladder, samples: int, seed: int,
                   threads: int = 1) -> tuple[float, np.ndarray]:
    """Heuristic fit ``k_n = k + c / n`` over a ladder of lengths.

    Returns the intercept and the finite-``n`` values. No rate is known, so
    treat the intercept as indicative only.
    """
    ns = np.asarray(n_ladder, dtype=int)
    ks = np.array([estimate_kt(mu, t, int(m), samples, seed, threads)[0] for m in ns])
    if ns.size < 2:
        return float(ks[0]), ks
    A = np.vstack([np.ones(ns.size), 1.0 / ns]).T
    coef, *_ = np.linalg.lstsq(A, ks, rcond=None)
    return float(coef[0]), ks


def convexity_violations(curve: KtCurve, nsigma: float = 3.0) -> list[int]:
    """Indices ``i`` where ``k_hat[i]`` exceeds the chord of its neighbours."""
    t, k, s = curve.t_values, curve.k_hat, curve.std_err
    bad = []
    for i in range(1, t.size - 1):
        lam = (t[i + 1] - t[i]) / (t[i + 1] - t[i - 1])
        chord = lam * k[i - 1] + (1 - lam) * k[i + 1]
        if k[i] > chord + nsigma * max(s[i - 1], s[i], s[i + 1]):
            bad.append(i)
    return bad


@dataclass(frozen=True)
class LegendreValue:
    value: float
    t_argmin: float
    edge_limited: bool


def legendre_rate(curve: KtCurve, alpha: float) -> LegendreValue:
    """``min_t { k_hat(t) - alpha t }`` over the curve's grid."""
    if curve.t_values.size == 0:
        raise EstimatorError("empty curve")
    vals = curve.k_hat - alpha * curve.t_values
    i = int(np.argmin(vals))
    edge = i == 0 or i == vals.size - 1
    return LegendreValue(float(vals[i]), float(curve.t_values[i]), bool(edge and curve.t_values.size > 1))


@dataclass(frozen=True)
class Threshold:
    """Diagnostic crossing point of a curve.

    ``value`` is the linearly interpolated crossing, ``grid_value`` the
    first grid point past it; ``flag`` is ``"ok"``, ``"edge"`` (already
    crossed at the left end) or ``"not detected"``.
    """

    value: float
    grid_value: float
    uncertainty: float
    flag: str


def _first_crossing(t: np.ndarray, excess: np.ndarray) -> Threshold:
    above = excess > 0
    if not np.any(above):
        return Threshold(math.nan, math.nan, math.nan, "not detected")
    i = int(np.argmax(above))
    step = float(np.max(np.diff(t))) if t.size > 1 else math.nan
    if i == 0:
        return Threshold(float(t[0]), float(t[0]), step, "edge")
    e0, e1 = excess[i - 1], excess[i]
    frac = -e0 / (e1 - e0) if np.isfinite(e0) and e1 != e0 else 1.0
    val = t[i - 1] + frac * (t[i] - t[i - 1])
    return Threshold(float(val), float(t[i]), float(t[i] - t[i - 1]), "ok")


def estimate_t0(curve: KtCurve, I0_at_0: float, nsigma: float = 2.0) -> Threshold:
    """Leftmost ``t`` with ``k_hat(t) > I(0)`` by more than ``nsigma`` errors."""
    if not np.isfinite(I0_at_0):
        return Threshold(math.nan, math.nan, math.nan, "not detected")
    excess = curve.k_hat - I0_at_0 - nsigma * curve.std_err
    return _first_crossing(curve.t_values, excess)


# ---------------------------------------------------------------------------
# rate tables
# ---------------------------------------------------------------------------

def gamma_grid(epsilon: float) -> np.ndarray:
    """``{i eps : i eps < 2} U {2}``."""
    m = int(math.ceil(2.0 / epsilon - 1e-12))
    g = [i * epsilon for i in range(m) if i * epsilon < 2.0 - 1e-12]
    return np.array(g + [2.0])


def alpha_grid(epsilon: float, alpha_bar: float) -> np.ndarray:
    """``{i eps : i >= 0, i eps <= alpha_bar}``."""
    m = int(math.floor(alpha_bar / epsilon + 1e-12))
    return np.arange(m + 1) * epsilon


@dataclass
class RateTable:
    """Empirical ``I_gamma(alpha, epsilon, n)``.

    Arrays are indexed ``[alpha_index, gamma_index]``. ``prob`` is the
    supremum over ``x`` of the (weighted) frequency, ``I_hat = log(prob)/n``
    with ``-inf`` for empty entries, and ``sigma`` a binomial standard error
    of ``I_hat`` (zero for exact enumeration tables).
    """

    alphas: np.ndarray
    gammas: np.ndarray
    hit_count: np.ndarray
    prob: np.ndarray
    I_hat: np.ndarray
    sigma: np.ndarray
    x_argmax: np.ndarray
    total: int
    n: int
    epsilon: float
    x_grid_size: int | None
    dual: bool
    exact: bool

    def column(self, gamma: float) -> np.ndarray:
        j = int(np.argmin(np.abs(self.gammas - gamma)))
        if abs(self.gammas[j] - gamma) > 1e-9:
            raise KeyError(f"gamma {gamma} not in table")
        return self.I_hat[:, j]

    def sigma_column(self, gamma: float) -> np.ndarray:
        j = int(np.argmin(np.abs(self.gammas - gamma)))
        return self.sigma[:, j]

    def rows(self):
        for i, a in enumerate(self.alphas):
            for j, g in enumerate(self.gammas):
                yield (float(a), float(g), int(self.hit_count[i, j]), self.total,
                       float(self.prob[i, j]), float(self.I_hat[i, j]),
                       float(self.sigma[i, j]), float(self.x_argmax[i, j]))


def rate_table_from_batch(batch: ProductBatch, epsilon: float, x_grid_size: int | None = 256,
                          dual: bool = False, gammas=None, alpha_bar: float | None = None) -> RateTable:
    """Build a rate table from sampled or enumerated products.

    Parameters
    ----------
    x_grid_size : int or None
        Size of the midpoint grid for the supremum over ``x``; ``None``
        computes the supremum exactly over all ``x``.
    gammas : array_like, optional
        Subset of the ``gamma`` grid to evaluate; defaults to the full grid.
    """
    if not epsilon > 0:
        raise ConfigurationError("epsilon must be positive")
    if x_grid_size is not None and x_grid_size < 4:
        raise ConfigurationError("x_grid_size must be >= 4")
    n = batch.n
    dirs = batch.upsilon_plus if dual else batch.omega_minus
    if dirs is None:
        raise ConfigurationError("batch has no direction data")
    weights = batch.weights
    total_mass = 1.0 if weights is not None else float(batch.size)
    a_per = batch.log_norm / n
    if alpha_bar is None:
        alpha_bar = float(a_per.max())
    alphas = alpha_grid(epsilon, max(alpha_bar, float(a_per.max())) + epsilon / 2)
    gammas = gamma_grid(epsilon) if gammas is None else np.asarray(gammas, dtype=float)
    bins = np.rint(a_per / epsilon).astype(np.int64)
    bins = np.clip(bins, 0, alphas.size - 1)
    centers = None
    if x_grid_size is not None:
        centers = (np.arange(x_grid_size) + 0.5) * np.pi / x_grid_size

    shape = (alphas.size, gammas.size)
    hits = np.zeros(shape, dtype=np.int64)
    prob = np.zeros(shape)
    xarg = np.full(shape, np.nan)
    order = np.argsort(bins, kind="stable")
    sb = bins[order]
    starts = np.searchsorted(sb, np.arange(alphas.size), side="left")
    ends = np.searchsorted(sb, np.arange(alphas.size), side="right")
    for i, alpha in enumerate(alphas):
        idx = order[starts[i]:ends[i]]
        if idx.size == 0:
            continue
        pts = SortedPoints.build(dirs[idx], None if weights is None else weights[idx])
        for j, gamma in enumerate(gammas):
            radius = math.exp(-n * (gamma - epsilon) * alpha)
            h = float(arc_halfwidth(radius))
            mass, count, x = pts.sup_arc_mass(h, centers)
            hits[i, j] = count
            prob[i, j] = mass / total_mass
            xarg[i, j] = x
    with np.errstate(divide="ignore"):
        I_hat = np.where(prob > 0, np.log(np.where(prob > 0, prob, 1.0)) / n, NEG_INF)
    if weights is None:
        with np.errstate(divide="ignore", invalid="ignore"):
            sig = np.where(hits > 0, np.sqrt(np.clip(1.0 - prob, 0.0, None) / np.maximum(hits, 1)) / n, np.inf)
    else:
        sig = np.zeros(shape)
    return RateTable(alphas, gammas, hits, prob, I_hat, sig, xarg,
                     batch.size, n, float(epsilon), x_grid_size, dual, weights is not None)


def estimate_rate_table(mu: MatrixMeasure, n: int, epsilon: float, x_grid_size: int | None,
                        samples: int, dual: bool, seed: int, threads: int = 1,
                        gammas=None) -> RateTable:
    """Sampled rate table (``x_grid_size=None`` for the exact supremum)."""
    n = check_count(n, "n")
    samples = check_count(samples, "samples")
    check_seed(seed)
    if not epsilon > 0:
        raise ConfigurationError("epsilon must be positive")
    batch = sample_batch(mu, n, samples, seed, threads)
    return rate_table_from_batch(batch, epsilon, x_grid_size, dual, gammas, mu.alpha_bar)


def exact_rate_table(mu: MatrixMeasure, n: int, epsilon: float, x_grid_size: int | None,
                     dual: bool = False, gammas=None) -> RateTable:
    """Rate table from the full enumeration of ``mu^n``."""
    batch = enumerate_batch(mu, n)
    return rate_table_from_batch(batch, epsilon, x_grid_size, dual, gammas, mu.alpha_bar)


def compare_tables(sampled: RateTable, exact: RateTable, nsigma: float = 3.0) -> dict:
    """Per-entry comparison of a sampled table against the exact one.

    Entries are compared in probability space,
    ``|p_hat - p| <= nsigma * sqrt(p (1 - p) / S)``. When ``p = 0`` the
    sampled entry must be empty too.
    """
    if sampled.alphas.size != exact.alphas.size or sampled.gammas.size != exact.gammas.size:
        raise ConfigurationError("tables have different shapes")
    p = exact.prob
    ph = sampled.prob
    sd = np.sqrt(p * (1 - p) / sampled.total)
    bad = np.abs(ph - p) > nsigma * sd + 1e-15
    z = np.where(sd > 0, np.abs(ph - p) / np.where(sd > 0, sd, 1.0), np.where(bad, np.inf, 0.0))
    return {"violations": int(bad.sum()), "entries": int(p.size), "max_z": float(z.max()),
            "mask": bad}


def covering_number(r_big: float, r_small: float) -> int:
    """Arcs of ``d_P``-radius ``r_small`` needed to cover one of radius ``r_big``."""
    A = float(arc_halfwidth(r_big))
    a = float(arc_halfwidth(r_small))
    if a >= np.pi / 2:
        return 1
    return max(1, int(math.ceil(min(2 * A, np.pi) / (2 * a) - 1e-12)))


def gamma_order_violations(table: RateTable, slack: float = 0.0, covering: bool = False) -> dict:
    """Check monotonicity and the Lipschitz bound in ``gamma``.

    For ``gamma' <= gamma``: ``I_gamma <= I_gamma'`` and
    ``I_gamma' <= I_gamma + (gamma - gamma') alpha``. Pairs where both
    sides are ``-inf`` are skipped.

    With ``covering=True`` the second bound gets the finite-``n`` term
    ``log(N) / n``, where ``N`` is the number of small arcs needed to
    cover a large one; that version holds exactly for every ``n``.
    """
    first = second = 0
    worst_second = 0.0
    I = table.I_hat
    for i, alpha in enumerate(table.alphas):
        row = I[i]
        if not np.any(np.isfinite(row)):
            continue
        for j in range(table.gammas.size):
            for jp in range(j):
                g, gp = table.gammas[j], table.gammas[jp]
                a, b = row[j], row[jp]
                if a > b + slack:
                    first += 1
                if np.isfinite(b):
                    bound = a + (g - gp) * alpha
                    if covering:
                        eps = table.epsilon
                        r_big = math.exp(-table.n * (gp - eps) * alpha)
                        r_small = math.exp(-table.n * (g - eps) * alpha)
                        bound = a + math.log(covering_number(r_big, r_small)) / table.n
                    excess = b - bound
                    if excess > slack:
                        second += 1
                        worst_second = max(worst_second, float(excess))
    return {"monotone": first, "lipschitz": second, "worst_lipschitz_excess": worst_second}


def estimate_tc(curve: KtCurve, I2_table: RateTable, nsigma: float = 2.0) -> Threshold:
    """Leftmost ``t`` where ``k_hat(t) > sup_alpha {I_2(alpha) - t alpha}``.

    The result is clipped to ``[-1, 0)``.
    """
    col = I2_table.column(2.0)
    sig = I2_table.sigma_column(2.0)
    finite = np.isfinite(col)
    if not np.any(finite):
        raise EstimatorError("no I2 data")
    a = I2_table.alphas[finite]
    I2 = col[finite]
    s2 = np.where(np.isfinite(sig[finite]), sig[finite], 0.0)
    excess = np.empty(curve.t_values.size)
    for k, t in enumerate(curve.t_values):
        vals = I2 - t * a
        m = int(np.argmax(vals))
        err = math.hypot(curve.std_err[k], s2[m])
        excess[k] = curve.k_hat[k] - vals[m] - nsigma * err
    th = _first_crossing(curve.t_values, excess)
    if th.flag == "not detected":
        return th
    val = min(max(th.value, -1.0), np.nextafter(0.0, -1.0))
    flag = th.flag if val == th.value else "clipped"
    return Threshold(float(val), th.grid_value, th.uncertainty, flag)
