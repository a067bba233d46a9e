"""Acceptance suite: sixteen numbered checks with fixed sizes and tolerances.

Each check returns a :class:`CheckResult`; :func:`run_acceptance` runs a
selection of them in order. Runtimes are measured but only enter the
verdict for checks that carry a runtime budget.
"""
from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import estimators as est
from . import riesz
from . import transfer as tr
from .measures import (
    diag_rotation_measure,
    orbit_samples,
    reference_measure,
    rotation_measure,
)
from .projective import verify_geometry_suite


@dataclass
class CheckResult:
    """Outcome of one acceptance check.

    ``measured`` and ``tolerance`` are the headline numbers; ``details``
    carries everything else worth reporting.
    """

    id: int
    name: str
    passed: bool
    measured: float
    tolerance: float
    runtime: float = math.nan
    budget: float | None = None
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        rt = f" runtime={self.runtime:.2f}s" if math.isfinite(self.runtime) else ""
        if self.budget is not None:
            rt += f" (budget {self.budget:g}s)"
        return (f"[{status}] {self.id:2d} {self.name}: measured={self.measured:.6g} "
                f"tolerance={self.tolerance:.6g}{rt}")


REGISTRY: dict[int, tuple[str, float | None, Callable]] = {}


def check(cid: int, name: str, budget: float | None = None):
    def deco(fn):
        REGISTRY[cid] = (name, budget, fn)
        return fn
    return deco


# ---------------------------------------------------------------------------
# geometry and exactness
# ---------------------------------------------------------------------------

@check(1, "geometry suite", budget=10.0)
def c01(seed: int, threads: int) -> dict:
    r = verify_geometry_suite(10 ** 5, math.exp(5.0), seed)
    worst = r["sandwich"] + r["contraction"] + r["pythagoras"]
    return dict(passed=worst == 0, measured=float(worst), tolerance=0.0, details=r)


@check(2, "svd2 relational invariants", budget=2.0)
def c02(seed: int, threads: int) -> dict:
    r = verify_geometry_suite(10 ** 4, math.exp(5.0), seed)
    v = r["svd_relations"]
    return dict(passed=v == 0, measured=float(v), tolerance=0.0, details=r)


@check(3, "exactness anchors")
def c03(seed: int, threads: int) -> dict:
    mu = reference_measure()
    k0 = est.estimate_kt(mu, 0.0, 8, 1000, seed, threads)[0]
    op = tr.build_operator(mu, 0.0, 1024)
    row_err = float(np.max(np.abs(np.asarray(op.matrix.sum(axis=1)).ravel() - 1.0)))
    eig_err = {}
    for label, m in (("reference", mu), ("rotation", rotation_measure())):
        trip = tr.leading_triple(tr.build_operator(m, 0.0, 1024))
        eig_err[label] = abs(math.exp(trip.log_eigenvalue) - 1.0)
    worst_eig = max(eig_err.values())
    ok = k0 == 0.0 and row_err <= 1e-12 and worst_eig <= 1e-8
    return dict(passed=ok, measured=worst_eig, tolerance=1e-8,
                details={"k_hat_0": k0, "row_sum_error": row_err, "eigenvalue_error": eig_err})


@check(4, "duality by enumeration", budget=1.0)
def c04(seed: int, threads: int) -> dict:
    rng = np.random.default_rng(seed)
    probe = rng.uniform(0.0, np.pi, 8)
    w = np.full(8, 1.0 / 8)
    d = tr.duality_check(reference_measure(), -0.3, 3, probe, w, tr.grid_nodes(64))
    return dict(passed=d <= 1e-10, measured=d, tolerance=1e-10)


@check(5, "mass identity")
def c05(seed: int, threads: int) -> dict:
    r = tr.mass_identity_check(reference_measure(), -0.3, 2, 4096)
    d = r["relative_difference"]
    return dict(passed=d <= 1e-6, measured=d, tolerance=1e-6, details=r)


# ---------------------------------------------------------------------------
# stationary measure and k(t)
# ---------------------------------------------------------------------------

def furstenberg_ks(seed: int, threads: int, samples: int = 10 ** 6, N: int = 4096) -> dict:
    """Kolmogorov distances between orbit samples and the grid eigenmeasure.

    ``edge`` compares the two distribution functions at the cell edges,
    where the grid measure's distribution function is defined by its cell
    masses. ``uniform`` additionally spreads each cell's mass uniformly and
    takes the supremum over all sample points.
    """
    mu = reference_measure()
    trip = tr.leading_triple(tr.build_operator(mu, 0.0, N))
    nu = trip.eigenmeasure
    x = np.sort(orbit_samples(mu, samples, seed, threads=threads))
    edges = np.arange(N + 1) * np.pi / N
    emp_edges = np.searchsorted(x, edges, side="right") / x.size
    ks_edge = float(np.max(np.abs(emp_edges - nu.cdf(edges))))
    F = nu.cdf(x)
    hi = np.arange(1, x.size + 1) / x.size
    lo = np.arange(x.size) / x.size
    ks_uniform = float(max(np.max(np.abs(hi - F)), np.max(np.abs(F - lo))))
    return {"edge": ks_edge, "uniform": ks_uniform, "iterations": trip.iterations}


@check(6, "Furstenberg agreement", budget=60.0)
def c06(seed: int, threads: int) -> dict:
    r = furstenberg_ks(seed, threads)
    return dict(passed=r["edge"] <= 0.02, measured=r["edge"], tolerance=0.02, details=r)


KT_GRID = (-0.4, -0.3, -0.2, -0.1, 0.0)


@check(7, "k(t) cross-validation")
def c07(seed: int, threads: int) -> dict:
    mu = reference_measure()
    curve = est.estimate_kt_curve(mu, KT_GRID, 24, 10 ** 6, seed, threads)
    grid = np.array([tr.grid_kt(mu, t, 4096) for t in KT_GRID])
    diff = np.abs(curve.k_hat - grid)
    conv = est.convexity_violations(curve, 3.0)
    worst = float(diff.max())
    return dict(passed=worst <= 0.02 and not conv, measured=worst, tolerance=0.02,
                details={"k_mc": curve.k_hat.tolist(), "std_err": curve.std_err.tolist(),
                         "k_grid": grid.tolist(), "convexity_violations": conv})


@check(8, "superadditivity bracket")
def c08(seed: int, threads: int) -> dict:
    mu = reference_measure()
    vals = {n: est.estimate_kt(mu, -0.3, n, 10 ** 6, seed, threads)[:2] for n in (8, 16, 32)}
    excess = []
    for a, b in ((8, 16), (16, 32)):
        (ka, sa), (kb, sb) = vals[a], vals[b]
        excess.append(ka - kb - 3.0 * math.hypot(sa, sb))
    worst = max(excess)
    return dict(passed=worst <= 0.0, measured=worst, tolerance=0.0,
                details={f"n={n}": v for n, v in vals.items()})


# ---------------------------------------------------------------------------
# rate tables
# ---------------------------------------------------------------------------

@check(9, "rate-table oracle")
def c09(seed: int, threads: int) -> dict:
    mu = reference_measure()
    cmp_viol = 0
    sharp_total = {"monotone": 0, "lipschitz": 0, "worst_lipschitz_excess": 0.0}
    covering = {"monotone": 0, "lipschitz": 0, "worst_lipschitz_excess": 0.0}
    per_n = {}
    for n in range(1, 9):
        sampled = est.estimate_rate_table(mu, n, 0.05, 256, 10 ** 6, False, seed + n, threads)
        exact = est.exact_rate_table(mu, n, 0.05, 256)
        c = est.compare_tables(sampled, exact, 3.0)
        cmp_viol += c["violations"]
        sharp = est.exact_rate_table(mu, n, 0.05, None)
        lz = est.gamma_order_violations(sharp, 0.0)
        cv = est.gamma_order_violations(sharp, 1e-12, covering=True)
        for tot, part in ((sharp_total, lz), (covering, cv)):
            tot["monotone"] += part["monotone"]
            tot["lipschitz"] += part["lipschitz"]
            tot["worst_lipschitz_excess"] = max(tot["worst_lipschitz_excess"], part["worst_lipschitz_excess"])
        per_n[n] = {"compare_violations": c["violations"], "max_z": c["max_z"],
                    "monotone": lz["monotone"], "lipschitz": lz["lipschitz"]}
    bad = cmp_viol + sharp_total["monotone"] + sharp_total["lipschitz"]
    return dict(passed=bad == 0, measured=float(bad), tolerance=0.0,
                details={"compare_violations": cmp_viol, "zero_slack": sharp_total,
                         "with_covering_term": covering, "per_n": per_n})


# ---------------------------------------------------------------------------
# eigenfunction, dimension, audit
# ---------------------------------------------------------------------------

@check(10, "eigenfunction as potential")
def c10(seed: int, threads: int) -> dict:
    mu = reference_measure()
    t, N = -0.2, 4096
    h = tr.leading_triple(tr.build_operator(mu, t, N)).eigenfunction
    star = tr.leading_triple(tr.build_operator(mu, t, N, dual=True)).eigenmeasure
    pot = tr.eigenfunction_from_eigenmeasure(star, t)
    d = tr.sup_relative_distance(h, pot)
    a = h.values / h.values.mean()
    b = pot.values / pot.values.mean()
    med = float(np.median(np.abs(a - b)) / np.max(np.abs(b)))
    return dict(passed=d <= 5e-3, measured=d, tolerance=5e-3,
                details={"median_relative_error": med})


DIM_RADII = np.geomspace(1e-4, 1e-1, 10)


def dimension_pipeline(mu, n: int, samples: int, orbit: int, seed: int, threads: int,
                       epsilon: float = 0.05, x_grid_size: int | None = None,
                       radii=DIM_RADII) -> dict:
    """Dual rate table, zeta at ``t = 0``, and the ball-mass dimension of ``nu_F``."""
    table = est.estimate_rate_table(mu, n, epsilon, x_grid_size, samples, True, seed, threads,
                                    gammas=[0.0, 1.0, 2.0])
    z = tr.zeta_solver(table, 0.0, 0.0)
    pts = orbit_samples(mu, orbit, seed + 1, threads=threads)
    dim = riesz.frostman_dim_estimate(pts, radii)
    return {"zeta": z.zeta, "alpha_star": z.alpha_star, "zeta_flag": z.flag,
            "frostman": dim.value, "frostman_stderr": dim.slope_stderr,
            "difference": abs(z.zeta - dim.value), "table": table, "dimension": dim}


@check(11, "dimension desk check", budget=600.0)
def c11(seed: int, threads: int) -> dict:
    r = dimension_pipeline(reference_measure(), 20, 10 ** 7, 10 ** 6, seed, threads)
    d = r["difference"]
    return dict(passed=d <= 0.1, measured=d, tolerance=0.1,
                details={k: v for k, v in r.items() if k not in ("table", "dimension")})


def rate_bound_pipeline(mu, t: float, n: int, samples: int, N: int, seed: int, threads: int,
                      epsilon: float = 0.05, x_grid_size: int | None = None) -> dict:
    """``k`` from the grid operator, ``zeta_t`` from the rate table, then the audit."""
    k = tr.grid_kt(mu, t, N)
    table = est.estimate_rate_table(mu, n, epsilon, x_grid_size, samples, False, seed, threads)
    z = tr.zeta_solver(table, k, t)
    audit = tr.rate_bound_audit(table, k, z.zeta, t)
    return {"k": k, "zeta": z.zeta, "zeta_flag": z.flag, "audit": audit, "table": table}


@check(12, "rate bound audit")
def c12(seed: int, threads: int) -> dict:
    r = rate_bound_pipeline(reference_measure(), -0.2, 20, 10 ** 6, 4096, seed, threads)
    a = r["audit"]
    return dict(passed=a["fraction"] >= 0.95, measured=a["fraction"], tolerance=0.95,
                details={"k": r["k"], "zeta": r["zeta"], "passed": a["passed"], "total": a["total"],
                         "violations": a["violations"]})


# ---------------------------------------------------------------------------
# Fourier toolkit and estimator calibration
# ---------------------------------------------------------------------------

RIESZ_T = (-0.1, -0.5, -0.9)


def riesz_suite(seed: int) -> dict:
    """All circle-toolkit checks; returns per-item measurements and verdicts."""
    out = {}
    # positivity of the kernel coefficients
    min_c = math.inf
    closed_gap = 0.0
    for t in RIESZ_T:
        for n in range(1, 65):
            c = riesz.fourier_coeff_kernel(t, n)
            min_c = min(min_c, c)
            closed_gap = max(closed_gap, abs(c - riesz.kernel_coefficient_closed_form(t, n)))
    out["kernel_min_coefficient"] = (min_c, 1e-12, min_c > 1e-12)
    out["kernel_closed_form_gap"] = (closed_gap, 1e-10, closed_gap <= 1e-10)

    rng = np.random.default_rng(seed)
    M = 16
    zero_mean = sym = 0.0
    x = np.arange(256) * np.pi / 256
    for t in RIESZ_T:
        beta = t + 1.0
        f = riesz.FourierSeries.random_real(M, rng, mean=rng.normal())
        g = riesz.FourierSeries.random_real(M, rng, mean=rng.normal())
        Tf = riesz.t_beta_multiplier(f, beta)
        Tg = riesz.t_beta_multiplier(g, beta)
        zero_mean = max(zero_mean, abs(float(np.mean(np.real(Tf.evaluate(x))))))
        sym = max(sym, abs(riesz.pairing(Tf, g) - riesz.pairing(f, Tg)))
    out["t_beta_zero_mean"] = (zero_mean, 1e-12, zero_mean <= 1e-12)
    out["pairing_symmetry"] = (sym, 1e-10, sym <= 1e-10)

    # T_beta (G_beta * f) = C_beta (f - mean f), with G_beta's coefficients by quadrature
    inv_g = 0.0
    for t in RIESZ_T:
        beta = t + 1.0
        cb = riesz.c_beta(beta)
        f = riesz.FourierSeries.random_real(8, rng, mean=rng.normal())
        gc = np.array([riesz.g_beta_coefficient(t, n) if n else 0.0 for n in f.indices])
        conv = riesz.FourierSeries(f.coeffs * gc)
        lhs = riesz.t_beta_multiplier(conv, beta).evaluate(x)
        rhs = cb * (f.evaluate(x) - f[0])
        inv_g = max(inv_g, float(np.max(np.abs(lhs - rhs))))
    # density recovered from its potential by dividing out the kernel coefficients
    inv_p = 0.0
    for t in RIESZ_T:
        a = rng.uniform(-0.15, 0.15, 4)
        b = rng.uniform(-0.15, 0.15, 4)
        rho = riesz.TrigDensity(a, b)
        L = 32
        pot = riesz.riesz_potential(rho, t, np.arange(L) * np.pi / L)
        fs = riesz.FourierSeries.from_samples(pot, 6)
        for n in range(-6, 7):
            rec = fs[n] / riesz.fourier_coeff_kernel(t, n)
            inv_p = max(inv_p, abs(rec - riesz.fourier_coeff_measure(rho, n)))
    inv = max(inv_g, inv_p)
    out["multiplier_inversion"] = (inv, 1e-8, inv <= 1e-8)

    c_half = abs(riesz.c_beta(0.5) - math.pi ** -0.5)
    out["c_half"] = (c_half, 1e-10, c_half <= 1e-10)

    ratios = {}
    for t in RIESZ_T:
        r = riesz.lipschitz_difference_test(t)
        ratios[t] = (r["max_ratio"], r["max_quotient"])
    worst = max(v[0] for v in ratios.values())
    bounded = all(math.isfinite(v[1]) for v in ratios.values())
    out["lipschitz_max_ratio"] = (worst, 2.0, worst <= 2.0 and bounded)
    return out


@check(13, "circle Fourier toolkit")
def c13(seed: int, threads: int) -> dict:
    r = riesz_suite(seed)
    failed = [k for k, v in r.items() if not v[2]]
    return dict(passed=not failed, measured=float(len(failed)), tolerance=0.0,
                details={k: {"measured": v[0], "tolerance": v[1], "passed": v[2]} for k, v in r.items()}
                | {"failed": failed})


def pushforward_measure(N: int) -> tr.GridMeasure:
    """Image of ``lambda`` under ``theta -> theta^2 / pi``, with exact cell masses."""
    edges = np.arange(N + 1) * np.pi / N
    return tr.GridMeasure(np.diff(np.sqrt(edges / np.pi)))


def calibration_suite() -> dict:
    N = 4096
    f = tr.GridFunction(np.abs(np.sin(tr.grid_nodes(N))) ** 0.5)
    hold = riesz.holder_exponent_estimate(f).value
    leb = riesz.frostman_dim_estimate(tr.GridMeasure.lebesgue(N)).value
    push = riesz.frostman_dim_estimate(pushforward_measure(1 << 16)).value
    return {"holder_sqrt_distance": (hold, 0.5, 0.05, abs(hold - 0.5) <= 0.05),
            "frostman_lebesgue": (leb, 1.0, 0.02, abs(leb - 1.0) <= 0.02),
            "frostman_pushforward": (push, 0.5, 0.05, abs(push - 0.5) <= 0.05)}


@check(14, "estimator calibration")
def c14(seed: int, threads: int) -> dict:
    r = calibration_suite()
    worst = max(abs(v[0] - v[1]) / v[2] for v in r.values())
    return dict(passed=all(v[3] for v in r.values()), measured=worst, tolerance=1.0,
                details={k: {"value": v[0], "target": v[1], "tolerance": v[2]} for k, v in r.items()})


@check(15, "classical Lyapunov check")
def c15(seed: int, threads: int) -> dict:
    n = 1000
    r = est.estimate_lyapunov(diag_rotation_measure(), n, 10 ** 5, seed, threads)
    z = abs(r.value) / r.std_err if r.std_err > 0 else (0.0 if r.value == 0 else math.inf)
    # products are a rotation times diag(2^S_n) for a walk S_n, so the
    # finite-n mean is log(2) sqrt(2 / (pi n)) > 0
    predicted = math.log(2) * math.sqrt(2 / (math.pi * n))
    return dict(passed=z <= 3.0, measured=z, tolerance=3.0,
                details={"L_hat": r.value, "std_err": r.std_err, "n": n,
                         "predicted_finite_n_mean": predicted})


# ---------------------------------------------------------------------------
# determinism
# ---------------------------------------------------------------------------

DETERMINISM_CONFIGS = (
    {"command": "verify-geometry", "trials": 20000},
    {"command": "lyapunov", "n": 32, "samples": 200000},
    {"command": "kt-curve", "n": 16, "samples": 200000},
    {"command": "rate-table", "n": 10, "samples": 200000},
    {"command": "spectrum", "N": 512},
    {"command": "zeta", "n": 10, "samples": 200000, "N": 512},
    {"command": "dimension", "n": 10, "samples": 200000, "orbit_samples": 200000},
    {"command": "riesz-selftest", "quick": True},
)


def _digest_dir(path: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(path.iterdir()) if p.is_file()}


@check(16, "determinism across thread counts")
def c16(seed: int, threads: int) -> dict:
    from .cli import ExperimentConfig, run

    mismatched = []
    files = 0
    with tempfile.TemporaryDirectory() as tmp:
        for cfg in DETERMINISM_CONFIGS:
            outs = []
            for k in (1, 8):
                d = Path(tmp) / f"{cfg['command']}-{k}"
                conf = ExperimentConfig.from_mapping({**cfg, "seed": seed, "threads": k,
                                                      "output_dir": str(d)})
                run(conf, quiet=True)
                outs.append(_digest_dir(d))
            a, b = outs
            files += len(a)
            if a.keys() != b.keys() or any(a[k] != b[k] for k in a):
                mismatched.append(cfg["command"])
    return dict(passed=not mismatched and files > 0, measured=float(len(mismatched)), tolerance=0.0,
                details={"commands": [c["command"] for c in DETERMINISM_CONFIGS],
                         "files_compared": files, "mismatched": mismatched})


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def run_check(cid: int, seed: int = 0, threads: int = 1) -> CheckResult:
    name, budget, fn = REGISTRY[cid]
    t0 = time.perf_counter()
    r = fn(seed, threads)
    dt = time.perf_counter() - t0
    passed = bool(r["passed"]) and (budget is None or dt < budget)
    return CheckResult(cid, name, passed, float(r["measured"]), float(r["tolerance"]), dt, budget,
                       r.get("details", {}))


def run_acceptance(ids=None, seed: int = 0, threads: int = 1,
                   echo: Callable[[str], None] | None = None) -> list[CheckResult]:
    ids = sorted(REGISTRY) if ids is None else list(ids)
    out = []
    for cid in ids:
        res = run_check(cid, seed, threads)
        if echo is not None:
            echo(res.line())
        out.append(res)
    return out
