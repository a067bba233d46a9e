"""Geometry of SL(2,R) acting on the projective line.

Lines through the origin are stored by their canonical angle in ``[0, pi)``.
All circle arithmetic is done mod ``pi`` so that the projective metric is
simply ``|sin(theta_x - theta_y)|``.

The scalar types (:class:`Mat2`, :class:`ProjPoint`) are thin immutable
wrappers; the heavy lifting lives in the ``*_arrays`` helpers, which accept
numpy arrays of matrix entries and are what the estimators call.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DET_TOLERANCE = 1e-9
SVD_DEGENERACY_TOL = 1e-12
GEOMETRY_SLACK = 1e-9


class ConfigurationError(ValueError):
    """Raised for invalid numeric configuration (trial counts, seeds, ...)."""


def angle_mod(theta):
    """Reduce angles to ``[0, pi)``; works on scalars and arrays."""
    r = np.mod(theta, np.pi)
    # np.mod(-tiny, pi) rounds up to pi
    r = np.where(r >= np.pi, 0.0, r)
    if np.ndim(r) == 0:
        return float(r)
    return r


@dataclass(frozen=True)
class ProjPoint:
    """A line ``R(cos theta, sin theta)`` with ``theta`` in ``[0, pi)``."""

    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", angle_mod(float(self.theta)))

    @property
    def unit(self) -> tuple[float, float]:
        return math.cos(self.theta), math.sin(self.theta)


@dataclass(frozen=True)
class Mat2:
    """Real 2x2 matrix ``[[a, b], [c, d]]`` with determinant one.

    The determinant check is relative to ``|ad| + |bc|`` so that long
    products, whose entries are large, are not rejected for rounding.
    """

    a: float
    b: float
    c: float
    d: float
    det_tolerance: float = DET_TOLERANCE

    def __post_init__(self):
        for name in "abcd":
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"non-finite matrix entry {name}={v}")
            object.__setattr__(self, name, v)
        det = self.a * self.d - self.b * self.c
        scale = max(1.0, abs(self.a * self.d) + abs(self.b * self.c))
        if abs(det - 1.0) > self.det_tolerance * scale:
            raise ValueError(f"not unimodular: det={det!r}")

    @classmethod
    def from_rows(cls, rows, det_tolerance: float = DET_TOLERANCE) -> "Mat2":
        (a, b), (c, d) = rows
        return cls(a, b, c, d, det_tolerance)

    @classmethod
    def identity(cls) -> "Mat2":
        return cls(1.0, 0.0, 0.0, 1.0)

    @classmethod
    def rotation(cls, phi: float) -> "Mat2":
        # exact zeros at quarter turns, so products stay exactly diagonal
        c, s = math.cos(phi), math.sin(phi)
        c = 0.0 if abs(c) < 1e-15 else c
        s = 0.0 if abs(s) < 1e-15 else s
        return cls(c, -s, s, c)

    @classmethod
    def diag(cls, kappa: float) -> "Mat2":
        return cls(kappa, 0.0, 0.0, 1.0 / kappa)

    @property
    def entries(self) -> tuple[float, float, float, float]:
        return self.a, self.b, self.c, self.d

    def as_array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])

    @property
    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    @property
    def trace(self) -> float:
        return self.a + self.d

    def __matmul__(self, other: "Mat2") -> "Mat2":
        a, b, c, d = self.entries
        e, f, g, h = other.entries
        return Mat2(a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h,
                    max(self.det_tolerance, other.det_tolerance))


@dataclass(frozen=True)
class SvdParts:
    """Norm and singular directions of ``g = K diag(kappa, 1/kappa) L``.

    ``omega_plus``/``omega_minus`` live in the preimage (rows of ``L``),
    ``upsilon_plus``/``upsilon_minus`` in the image (columns of ``K``).
    """

    kappa: float
    omega_plus: ProjPoint
    omega_minus: ProjPoint
    upsilon_plus: ProjPoint
    upsilon_minus: ProjPoint


# ---------------------------------------------------------------------------
# vectorised kernels
# ---------------------------------------------------------------------------

def svd_arrays(a, b, c, d, degeneracy_tol: float = SVD_DEGENERACY_TOL):
    """Closed-form 2x2 SVD on arrays of entries.

    Writes ``g = Rot(phi) diag(s1, s2) Rot(theta)`` and returns
    ``(s1, s2, omega_plus, upsilon_plus)`` where ``omega_plus = -theta`` and
    ``upsilon_plus = phi`` (both reduced mod pi). ``s1`` is computed as a sum
    of two hypotenuses and never suffers cancellation, so it is accurate for
    very long products.

    When ``s1`` and ``s2`` coincide to ``degeneracy_tol`` (a rotation) the
    decomposition is not unique. We then split the rotation angle in half
    between the two factors, which keeps ``omega_+(g) = upsilon_+(g^T)`` and
    ``omega_-(g) = upsilon_+(g^{-1})``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    d = np.asarray(d, dtype=float)
    e = 0.5 * (a + d)
    f = 0.5 * (a - d)
    g = 0.5 * (c + b)
    h = 0.5 * (c - b)
    q = np.hypot(e, h)
    r = np.hypot(f, g)
    s1 = q + r
    s2 = q - r
    a1 = np.arctan2(g, f)
    a1 = np.where(r <= degeneracy_tol * q, 0.0, a1)
    a2 = np.arctan2(h, e)
    theta = 0.5 * (a2 - a1)
    phi = 0.5 * (a2 + a1)
    return s1, s2, angle_mod(-theta), angle_mod(phi)


def norm_arrays(a, b, c, d):
    """Spectral norm of 2x2 matrices given by entry arrays."""
    a = np.asarray(a, dtype=float)
    d = np.asarray(d, dtype=float)
    return 0.5 * (np.hypot(a + d, np.asarray(c) - b) + np.hypot(a - d, np.asarray(c) + b))


def act_arrays(a, b, c, d, theta):
    """Projective action and expansion factor ``|g u| / |u|``.

    Returns ``(image_angle, norm_ratio)``.
    """
    ct = np.cos(theta)
    st = np.sin(theta)
    x = a * ct + b * st
    y = c * ct + d * st
    return angle_mod(np.arctan2(y, x)), np.hypot(x, y)


def proj_dist(theta_x, theta_y):
    """``d_P`` between lines given by angles (arrays allowed)."""
    return np.abs(np.sin(np.asarray(theta_x) - np.asarray(theta_y)))


def arc_halfwidth(r):
    """Angular half-width of the closed ``d_P``-ball of radius ``r``.

    ``d_P(x, y) <= r`` iff the circular distance mod pi is at most
    ``arcsin(r)``; radii ``>= 1`` cover the whole line.
    """
    r = np.asarray(r, dtype=float)
    return np.where(r >= 1.0, np.pi / 2, np.arcsin(np.clip(r, 0.0, 1.0)))


# ---------------------------------------------------------------------------
# scalar operations
# ---------------------------------------------------------------------------

def proj_metric(x: ProjPoint, y: ProjPoint) -> float:
    """``|u ^ v| / (|u||v|)`` for lines ``x = Ru``, ``y = Rv``."""
    return abs(math.sin(x.theta - y.theta))


def inner_abs(x: ProjPoint, w: ProjPoint) -> float:
    """``|<u, v>| / (|u||v|)``."""
    return abs(math.cos(x.theta - w.theta))


def act(g: Mat2, x: ProjPoint) -> ProjPoint:
    u0, u1 = x.unit
    return ProjPoint(math.atan2(g.c * u0 + g.d * u1, g.a * u0 + g.b * u1))


def norm_ratio(g: Mat2, x: ProjPoint) -> float:
    u0, u1 = x.unit
    return math.hypot(g.a * u0 + g.b * u1, g.c * u0 + g.d * u1)


def adjoint(g: Mat2) -> Mat2:
    return Mat2(g.a, g.c, g.b, g.d, g.det_tolerance)


def perp(x: ProjPoint) -> ProjPoint:
    return ProjPoint(x.theta + math.pi / 2)


def svd2(g: Mat2, degeneracy_tol: float = SVD_DEGENERACY_TOL) -> SvdParts:
    """Norm and singular directions of ``g``.

    For ``|g| = 1`` (a rotation by ``rho``) every direction is singular; we
    return ``omega_plus = -rho/2`` and ``upsilon_plus = rho/2``, which maps
    correctly under ``g`` and is consistent with ``g^T`` and ``g^{-1}``.
    """
    s1, _, wp, up = svd_arrays(g.a, g.b, g.c, g.d, degeneracy_tol)
    wp = float(wp)
    up = float(up)
    return SvdParts(
        kappa=float(s1),
        omega_plus=ProjPoint(wp),
        omega_minus=ProjPoint(wp + math.pi / 2),
        upsilon_plus=ProjPoint(up),
        upsilon_minus=ProjPoint(up + math.pi / 2),
    )


# ---------------------------------------------------------------------------
# randomized audit of the expansion bounds
# ---------------------------------------------------------------------------

def random_sl2(rng: np.random.Generator, size: int, log_kappa_max: float):
    """Random SL(2,R) entries ``Rot(phi) diag(k, 1/k) Rot(psi)``.

    ``log k`` is uniform on ``[0, log_kappa_max]``.
    """
    lk = rng.uniform(0.0, log_kappa_max, size)
    phi = rng.uniform(0.0, 2 * np.pi, size)
    psi = rng.uniform(0.0, 2 * np.pi, size)
    k = np.exp(lk)
    cp, sp = np.cos(phi), np.sin(phi)
    cs, ss = np.cos(psi), np.sin(psi)
    # Rot(phi) @ diag(k, 1/k) @ Rot(psi)
    a = cp * k * cs - sp / k * ss
    b = -cp * k * ss - sp / k * cs
    c = sp * k * cs + cp / k * ss
    d = -sp * k * ss + cp / k * cs
    return a, b, c, d


def verify_geometry_suite(trials: int, kappa_max: float, seed: int,
                          slack: float = GEOMETRY_SLACK,
                          identity_only: bool = False) -> dict[str, int]:
    """Count violations of the expansion inequalities on random samples.

    Checked for random ``g`` with ``|g| <= kappa_max`` and random ``x, y``:

    * ``sandwich``: ``d(omega_-(g), x) <= |gx|/|g| <= d(omega_-(g), x) + |g|^-2``
    * ``contraction``: ``d(gx, gy) / d(x, y) <= 1 / (|gx| |gy|)``
    * ``attraction``: ``d(gx, upsilon_+(g)) <= 1 / (|gx| |g|)``
    * ``pythagoras``: ``|<x,y>|^2 + d(x,y)^2 = 1``
    * ``svd_relations``: ``omega_+(g) = upsilon_+(g^T)``, ``d(omega_-, omega_+) = 1``

    Returns a mapping from check name to number of violations beyond
    ``slack``.
    """
    if not isinstance(trials, (int, np.integer)) or trials < 1:
        raise ConfigurationError(f"trials must be a positive integer, got {trials!r}")
    if not isinstance(seed, (int, np.integer)) or seed < 0:
        raise ConfigurationError(f"seed must be a non-negative integer, got {seed!r}")
    if not kappa_max >= 1.0:
        raise ConfigurationError(f"kappa_max must be >= 1, got {kappa_max!r}")

    rng = np.random.default_rng(seed)
    if identity_only:
        a = np.ones(trials)
        b = np.zeros(trials)
        c = np.zeros(trials)
        d = np.ones(trials)
    else:
        a, b, c, d = random_sl2(rng, trials, math.log(kappa_max))
    x = rng.uniform(0.0, np.pi, trials)
    y = rng.uniform(0.0, np.pi, trials)

    kappa, _, wp, up = svd_arrays(a, b, c, d)
    wm = angle_mod(wp + np.pi / 2)
    gx, nx = act_arrays(a, b, c, d, x)
    gy, ny = act_arrays(a, b, c, d, y)

    dist_w = proj_dist(wm, x)
    ratio = nx / kappa
    sandwich = (dist_w > ratio + slack) | (ratio > dist_w + kappa ** -2 + slack)

    dxy = proj_dist(x, y)
    ok = dxy > 0
    lhs = np.where(ok, proj_dist(gx, gy) / np.where(ok, dxy, 1.0), 0.0)
    contraction = ok & (lhs > 1.0 / (nx * ny) + slack)

    attraction = proj_dist(gx, up) > 1.0 / (nx * kappa) + slack

    pyth = np.abs(np.cos(x - y) ** 2 + np.sin(x - y) ** 2 - 1.0) > 1e-12

    _, _, wp_t, up_t = svd_arrays(a, c, b, d)
    rel = (proj_dist(wp, up_t) > slack) | (np.abs(proj_dist(wm, wp) - 1.0) > slack)

    return {
        "sandwich": int(sandwich.sum()),
        "contraction": int(contraction.sum()),
        "attraction": int(attraction.sum()),
        "pythagoras": int(pyth.sum()),
        "svd_relations": int(rel.sum()),
    }
