"""Discretised transfer operators on a circular midpoint grid.

``P_t psi(x) = sum_a w_a |g_a x|^t psi(g_a x)`` is collocated at the nodes
``theta_i = (i + 1/2) pi / N``; ``psi(g_a x_i)`` is read off by circular
linear interpolation between the two bracketing nodes. The dual operator
uses the transposed matrices. Functions are column vectors acted on by
``P``; measures are weight vectors acted on by ``P.T``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels
from .estimators import RateTable, EstimatorError
from .measures import (
    MatrixMeasure,
    StreamHandle,
    check_count,
    check_seed,
    enumeration_words,
)
from .projective import ConfigurationError, act_arrays, angle_mod

SNAP = 1e-12


class ConvergenceError(RuntimeError):
    """Power iteration did not settle; carries the last iterate."""

    def __init__(self, message: str, last_function=None, last_measure=None, history=None):
        super().__init__(message)
        self.last_function = last_function
        self.last_measure = last_measure
        self.history = [] if history is None else list(history)


def grid_nodes(N: int) -> np.ndarray:
    return (np.arange(N) + 0.5) * np.pi / N


@dataclass
class GridFunction:
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function has non-finite values")

    @property
    def N(self) -> int:
        return self.values.size

    @property
    def nodes(self) -> np.ndarray:
        return grid_nodes(self.N)


@dataclass
class GridMeasure:
    """Nonnegative cell weights, each spread uniformly over its cell."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("grid measure weights must be finite and nonnegative")
        s = w.sum()
        if s <= 0:
            raise ValueError("grid measure has zero mass")
        self.weights = w / s

    @property
    def N(self) -> int:
        return self.weights.size

    @property
    def nodes(self) -> np.ndarray:
        return grid_nodes(self.N)

    @classmethod
    def lebesgue(cls, N: int) -> "GridMeasure":
        return cls(np.full(N, 1.0 / N))

    def cdf(self, x) -> np.ndarray:
        """Distribution function on ``[0, pi)``, linear inside cells."""
        edges = np.arange(self.N + 1) * np.pi / self.N
        cum = np.concatenate([[0.0], np.cumsum(self.weights)])
        return np.interp(x, edges, cum)


@dataclass
class DiscreteOperator:
    matrix: sp.csr_matrix
    t: float
    N: int
    dual: bool
    fingerprint: str
    experimental: bool = False

    @property
    def transpose(self) -> sp.csr_matrix:
        return self.matrix.T.tocsr()


def build_operator(mu: MatrixMeasure, t: float, N: int, dual: bool = False) -> DiscreteOperator:
    """Collocation matrix of ``P_t`` (or ``*P_t`` when ``dual``)."""
    N = check_count(N, "N", 8)
    t = float(t)
    x = grid_nodes(N)
    h = np.pi / N
    rows, cols, vals = [], [], []
    for g, w in zip(mu.matrices, mu.weights):
        a, b, c, d = (g.a, g.c, g.b, g.d) if dual else g.entries
        y, r = act_arrays(a, b, c, d, x)
        val = w * r ** t
        p = y / h - 0.5
        j0 = np.floor(p)
        frac = p - j0
        up = frac > 1.0 - SNAP
        j0 = np.where(up, j0 + 1, j0)
        frac = np.where(up, 0.0, np.where(frac < SNAP, 0.0, frac))
        j0 = np.mod(j0.astype(np.int64), N)
        j1 = np.mod(j0 + 1, N)
        idx = np.arange(N)
        rows += [idx, idx]
        cols += [j0, j1]
        vals += [val * (1.0 - frac), val * frac]
    M = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
    M.sum_duplicates()
    M.eliminate_zeros()
    return DiscreteOperator(M, t, N, bool(dual), mu.fingerprint(), experimental=t > 0)


@dataclass
class EigenTriple:
    log_eigenvalue: float
    eigenfunction: GridFunction
    eigenmeasure: GridMeasure
    gap_ratio: float
    iterations: int
    residual_function: float = math.nan
    residual_measure: float = math.nan
    history: list = field(default_factory=list, repr=False)


def _companion_start(N: int) -> np.ndarray:
    th = grid_nodes(N)
    return np.cos(2 * th) + 0.5 * np.sin(6 * th) + 0.25 * np.cos(14 * th + 0.3)


def leading_triple(op: DiscreteOperator, tol: float = 1e-10, max_iters: int = 100_000,
                   min_iters: int = 32) -> EigenTriple:
    """Leading eigenvalue, eigenfunction and eigenmeasure by power iteration.

    The function side is normalised in sup norm and the measure side to
    total mass one. The log-eigenvalue is the mean log growth factor over
    the last quarter of the run, and the run only stops once those factors
    agree to ``tol``. A second vector, projected away from the
    current eigenpair at every step, gives the gap ratio
    ``|lambda_2| / lambda_1``.

    Raises
    ------
    ConvergenceError
        If the relative change of both iterates does not drop below
        ``tol`` within ``max_iters`` steps.
    """
    P = op.matrix
    PT = op.transpose
    N = op.N
    h = np.ones(N)
    m = np.full(N, 1.0 / N)
    v = _companion_start(N)
    v -= (m @ v) / (m @ h) * h
    v /= np.max(np.abs(v))
    logs: list[float] = []
    gaps: list[float] = []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        hn = P @ h
        lam = float(np.max(np.abs(hn)))
        if not lam > 0 or not math.isfinite(lam):
            raise ConvergenceError("operator annihilated the iterate", h, m, logs)
        hn /= lam
        mn = PT @ m
        mn /= mn.sum()
        logs.append(math.log(lam))
        dh = float(np.max(np.abs(hn - h)))
        dm = float(np.sum(np.abs(mn - m)))
        h, m = hn, mn
        if v is not None:
            v = (P @ v) / lam
            v -= (m @ v) / (m @ h) * h
            r = float(np.max(np.abs(v)))
            if r > 0 and math.isfinite(r):
                gaps.append(r)
                v /= r
            else:
                gaps.append(0.0)
                v = None
        if it >= min_iters and dh < tol and dm < tol:
            q = max(1, len(logs) // 4)
            tail = logs[-q:]
            if max(tail) - min(tail) < tol:
                converged = True
                break
    if not converged:
        raise ConvergenceError(f"power iteration did not converge in {max_iters} steps", h, m, logs)
    q = max(1, len(logs) // 4)
    log_eig = float(np.mean(logs[-q:]))
    tail = [g for g in gaps[-q:]]
    if not tail or min(tail) == 0.0:
        gap = 0.0
    else:
        gap = float(np.exp(np.mean(np.log(tail))))
    h = h / float(m @ h)
    lamv = math.exp(log_eig)
    rf = float(np.max(np.abs(P @ h - lamv * h)) / np.max(np.abs(h)))
    rm = float(np.sum(np.abs(PT @ m - lamv * m)))
    return EigenTriple(log_eig, GridFunction(h), GridMeasure(m), min(gap, 1.0), it, rf, rm, logs)


def grid_kt(mu: MatrixMeasure, t: float, N: int, **kw) -> float:
    return leading_triple(build_operator(mu, t, N), **kw).log_eigenvalue


def iterate_on_lebesgue(op_dual: DiscreteOperator, n: int) -> GridMeasure:
    """``(*P_t^n) lambda`` normalised to a probability vector."""
    n = check_count(n, "n")
    PT = op_dual.transpose
    m = np.full(op_dual.N, 1.0 / op_dual.N)
    for _ in range(n):
        m = PT @ m
        m /= m.sum()
    return GridMeasure(m)


# ---------------------------------------------------------------------------
# identities
# ---------------------------------------------------------------------------

def _walk(mu: MatrixMeasure, words: np.ndarray, start, t: float, dual: bool):
    """Follow each word letter by letter from ``start``.

    Returns end points and the products of ``|g x|^t`` along the way times
    the word probabilities.
    """
    A, B, C, D = mu.entry_arrays()
    if dual:
        B, C = C, B
    wts = np.asarray(mu.weights)
    y = np.broadcast_to(np.asarray(start, dtype=float), words.shape[:1]).copy()
    logc = np.zeros(words.shape[0])
    for k in range(words.shape[1]):
        a = words[:, k]
        y, r = act_arrays(A[a], B[a], C[a], D[a], y)
        logc += t * np.log(r) + np.log(wts[a])
    return y, np.exp(logc)


def duality_check(mu: MatrixMeasure, t: float, n: int, probe_angles, probe_weights,
                  x_nodes, cap: int = 10 ** 6, relative: bool = False) -> float:
    """``max_x |P_t^n F(x) - int |<x,w>|^t d(*P_t^n * nu)(w)|``.

    ``F(y) = int |<y, w>|^t d nu(w)`` for the atomic probe ``nu``. Both sides
    are evaluated exactly by walking every word of length ``n``. With
    ``relative=True`` each gap is divided by ``max(|lhs|, |rhs|, 1)``.
    """
    n = check_count(n, "n")
    words = enumeration_words(mu.size, n, cap)
    w_ang = np.asarray(probe_angles, dtype=float)
    w_wt = np.asarray(probe_weights, dtype=float)
    x = np.atleast_1d(np.asarray(x_nodes, dtype=float))
    worst = 0.0
    # right-hand side does not depend on x: push each probe atom once
    ends, coef = [], []
    for wk, pk in zip(w_ang, w_wt):
        y, c = _walk(mu, words, wk, t, dual=True)
        ends.append(y)
        coef.append(pk * c)
    ends = np.concatenate(ends)
    coef = np.concatenate(coef)
    for xi in x:
        y, c = _walk(mu, words, xi, t, dual=False)
        inner = np.abs(np.cos(y[:, None] - w_ang[None, :])) ** t @ w_wt
        lhs = float(c @ inner)
        rhs = float(coef @ (np.abs(np.cos(xi - ends)) ** t))
        gap = abs(lhs - rhs)
        if relative:
            gap /= max(abs(lhs), abs(rhs), 1.0)
        worst = max(worst, gap)
    return worst


def mass_identity_check(mu: MatrixMeasure, t: float, n: int, N: int) -> dict:
    """Relative difference between ``(*P_t^n) lambda (1)`` and ``(P_t^n) lambda (1)``."""
    n = check_count(n, "n")
    out = {}
    for dual in (False, True):
        PT = build_operator(mu, t, N, dual).transpose
        m = np.full(N, 1.0 / N)
        for _ in range(n):
            m = PT @ m
        out[dual] = float(m.sum())
    fwd, dl = out[False], out[True]
    return {"forward": fwd, "dual": dl, "relative_difference": abs(fwd - dl) / max(abs(fwd), abs(dl))}


def eigenfunction_from_eigenmeasure(star_nu: GridMeasure, t: float, N: int | None = None,
                                    nu: GridMeasure | None = None) -> GridFunction:
    """``x -> int |<x, w>|^t d star_nu(w)`` at the grid nodes.

    The measure is taken uniform within cells, and each cell contributes
    the exact average of the kernel. With ``nu`` given the result is scaled
    so that its pairing with ``nu`` equals one.
    """
    t = kernels.check_exponent(t)
    if N is not None and N != star_nu.N:
        raise ConfigurationError("N must match the measure's grid")
    vals = kernels.potential_on_nodes(star_nu.weights, t, shift=np.pi / 2)
    if nu is not None:
        vals = vals / float(nu.weights @ vals)
    return GridFunction(vals)


def sup_relative_distance(f: GridFunction, g: GridFunction) -> float:
    """``max |f/|f| - g/|g|| / max |g/|g||`` after matching means."""
    a = f.values / f.values.mean()
    b = g.values / g.values.mean()
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))


def lasota_yorke_probe(mu: MatrixMeasure, t: float, zeta: float, n: int, pair_samples: int,
                       seed: int, scales: int = 30, cap: int = 1 << 16,
                       sampled_products: int = 1 << 14) -> dict:
    """``(1/n) log sup_{x != y} int |gx|^t (d(gx,gy)/d(x,y))^zeta d mu^n``.

    In SL(2,R) the distortion ratio is exactly ``1/(|gx||gy|)``, which we
    use so that pairs at separation ``exp(-j)`` lose no precision. The law
    of ``mu^n`` is enumerated when it has at most ``cap`` words and sampled
    otherwise. Pairs: ``pair_samples`` random base points, each paired with
    points at separations ``exp(-j)`` for ``j = 0..scales`` and one random
    partner.
    """
    if not 0.0 <= zeta <= 1.0:
        raise ConfigurationError("zeta must lie in [0, 1]")
    n = check_count(n, "n")
    pair_samples = check_count(pair_samples, "pair_samples")
    seed = check_seed(seed)
    A, B, C, D = mu.entry_arrays()
    if mu.size ** n <= cap:
        words = enumeration_words(mu.size, n, cap)
        pw = np.prod(np.asarray(mu.weights)[words], axis=1)
    else:
        gen = StreamHandle(seed, 1).generator()
        cumw = np.cumsum(mu.weights)
        u = gen.random((sampled_products, n))
        words = np.minimum(np.searchsorted(cumw, u, side="right"), mu.size - 1)
        pw = np.full(sampled_products, 1.0 / sampled_products)
    from .measures import _multiply_words
    (a, b, c, d), expo = _multiply_words((A, B, C, D), words)
    gen = StreamHandle(seed, 0).generator()
    xs = gen.uniform(0.0, np.pi, pair_samples)
    partners = gen.uniform(0.0, np.pi, pair_samples)
    seps = np.exp(-np.arange(scales + 1, dtype=float))
    best = -math.inf
    best_pair = (math.nan, math.nan)
    log2 = math.log(2.0)
    for x, yr in zip(xs, partners):
        ys = np.concatenate([angle_mod(x + seps), [yr]])
        _, nx = act_arrays(a, b, c, d, x)
        lnx = np.log(nx) + expo * log2
        _, ny = act_arrays(a[:, None], b[:, None], c[:, None], d[:, None], ys[None, :])
        lny = np.log(ny) + expo[:, None] * log2
        # |gx|^t (1/(|gx||gy|))^zeta
        logint = (t - zeta) * lnx[:, None] - zeta * lny
        mx = logint.max(axis=0)
        vals = mx + np.log(pw @ np.exp(logint - mx))
        k = int(np.argmax(vals))
        if vals[k] > best:
            best = float(vals[k])
            best_pair = (float(x), float(ys[k]))
    return {"value": best / n, "pair": best_pair, "products": int(words.shape[0])}


# ---------------------------------------------------------------------------
# zeta_t and the rate bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ZetaSolution:
    zeta: float
    alpha_star: float
    flag: str  # "ok", "clipped-low", "clipped-high"


def _i2_entries(table) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(table, RateTable):
        return table.alphas, table.column(2.0)
    alphas, vals = table
    return np.asarray(alphas, dtype=float), np.asarray(vals, dtype=float)


def zeta_solver(I2_table, k_at_t: float, t: float, tol: float = 1e-6) -> ZetaSolution:
    """Solve ``max_alpha {I_2(alpha) - t alpha + 2 zeta alpha} = k`` by bisection.

    ``I2_table`` is a :class:`RateTable` (its ``gamma = 2`` column is used)
    or a pair ``(alphas, values)``.
    """
    if not -1.0 < t <= 0.0:
        raise ConfigurationError("t must lie in (-1, 0]")
    alphas, vals = _i2_entries(I2_table)
    keep = np.isfinite(vals) & (alphas > 0)
    if not np.any(keep):
        raise EstimatorError("degenerate table")
    a = alphas[keep]
    v = vals[keep]

    def F(z: float) -> float:
        return float(np.max(v - t * a + 2 * z * a)) - k_at_t

    def argmax(z: float) -> float:
        return float(a[int(np.argmax(v - t * a + 2 * z * a))])

    lo, hi = 0.0, 1.0 + t
    if F(lo) >= 0:
        z = tol
        return ZetaSolution(z, argmax(z), "clipped-low")
    if F(hi) < 0:
        return ZetaSolution(hi, argmax(hi), "clipped-high")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if F(mid) < 0:
            lo = mid
        else:
            hi = mid
    z = 0.5 * (lo + hi)
    return ZetaSolution(z, argmax(z), "ok")


def rate_bound_audit(table: RateTable, k_hat: float, zeta_hat: float, t: float,
                   extra_slack: float = 0.05, nsigma: float = 3.0) -> dict:
    """Check ``I_gamma(alpha) + t(1-gamma) alpha <= k - zeta gamma alpha + slack``.

    ``slack = nsigma * sigma + extra_slack`` per entry. Returns pass counts
    and the list of violating ``(alpha, gamma, excess)``.
    """
    passed = total = 0
    bad = []
    for i, alpha in enumerate(table.alphas):
        for j, gamma in enumerate(table.gammas):
            I = table.I_hat[i, j]
            if not np.isfinite(I):
                continue
            total += 1
            s = table.sigma[i, j]
            s = s if np.isfinite(s) else 0.0
            lhs = I + t * (1 - gamma) * alpha
            rhs = k_hat - zeta_hat * gamma * alpha + nsigma * s + extra_slack
            if lhs <= rhs:
                passed += 1
            else:
                bad.append((float(alpha), float(gamma), float(lhs - rhs)))
    return {"passed": passed, "total": total, "fraction": passed / total if total else math.nan,
            "violations": bad}
