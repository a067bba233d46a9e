"""Power-of-sine kernels and their integrals on the circle ``R / pi Z``.

Every potential in the package goes through :func:`sin_power_integral`,
which integrates ``|sin u|^t`` in closed form through the regularised
incomplete beta function. Grid measures are treated as uniform within each
cell, so a cell contributes the exact average of the kernel over the cell.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import beta, betainc


class ExponentError(ValueError):
    """Raised for exponents where the kernel is not integrable."""


def check_exponent(t: float) -> float:
    t = float(t)
    if not t > -1.0:
        raise ExponentError(f"non-integrable exponent t={t}")
    return t


def sin_power_period(t: float) -> float:
    """``int_0^pi |sin u|^t du = B((1+t)/2, 1/2)``."""
    return float(beta((1.0 + t) / 2.0, 0.5))


def sin_power_integral(a, t: float):
    """``int_0^a |sin u|^t du`` for any real ``a`` (vectorised)."""
    t = check_exponent(t)
    a = np.asarray(a, dtype=float)
    if t == 0.0:
        return a.copy()
    per = sin_power_period(t)
    k = np.floor(a / np.pi)
    b = a - k * np.pi
    half = np.minimum(b, np.pi - b)
    part = 0.5 * per * betainc((1.0 + t) / 2.0, 0.5, np.sin(half) ** 2)
    s = np.where(b <= np.pi / 2, part, per - part)
    return k * per + s


def sin_power_average(lo, hi, t: float):
    """Average of ``|sin u|^t`` over ``[lo, hi]`` (``hi > lo``)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if float(t) == 0.0:
        return np.ones(np.broadcast(lo, hi).shape)
    return (sin_power_integral(hi, t) - sin_power_integral(lo, t)) / (hi - lo)


def lambda_constant(t: float) -> float:
    """``C_{lambda,t} = (1/pi) int_0^pi |sin u|^t du``."""
    t = check_exponent(t)
    return sin_power_period(t) / math.pi


def node_kernel(N: int, t: float, shift: float = 0.0) -> np.ndarray:
    """Cell averages ``K_d`` of ``|sin(u + shift)|^t`` over ``u`` in cell offset ``d``.

    ``K_d`` is the mean over ``u in [d h - h/2, d h + h/2]`` with
    ``h = pi / N``; it is the contribution of cell ``i + d`` to the
    potential at node ``i``.
    """
    h = np.pi / N
    d = np.arange(N, dtype=float)
    lo = d * h - h / 2 + shift
    return sin_power_average(lo, lo + h, t)


def potential_on_nodes(weights, t: float, shift: float = 0.0) -> np.ndarray:
    """``sum_j w_j K_{j - i}`` at every node ``i`` (circular correlation)."""
    w = np.asarray(weights, dtype=float)
    N = w.size
    K = node_kernel(N, t, shift)
    return np.real(np.fft.ifft(np.fft.fft(w) * np.conj(np.fft.fft(K))))


def potential_of_cells(x, weights, t: float, shift: float = 0.0) -> np.ndarray:
    """Potential of a cell-uniform measure at arbitrary points ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    w = np.asarray(weights, dtype=float)
    N = w.size
    h = np.pi / N
    if float(t) == 0.0:
        return np.full(x.shape, float(w.sum()))
    # shared edges keep the sum telescoping when x sits on a cell boundary
    edges = np.arange(N + 1) * h
    F = sin_power_integral(edges[None, :] - x[:, None] + shift, t)
    return (np.diff(F, axis=1) / h) @ w


def potential_of_atoms(x, angles, weights, t: float, shift: float = 0.0) -> np.ndarray:
    """``sum_k w_k |sin(x - y_k + shift)|^t`` at points ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.asarray(angles, dtype=float)
    w = np.asarray(weights, dtype=float)
    with np.errstate(divide="ignore"):
        vals = np.abs(np.sin(x[:, None] - y[None, :] + shift)) ** t
    return vals @ w
