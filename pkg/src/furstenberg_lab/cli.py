"""Command-line runner.

One process runs one command. Outputs go to ``--out``: CSV tables whose
header lines embed the configuration fingerprint, plus ``report.json``
with the per-check verdicts and a manifest of the files written. Wall time
is printed to stdout only, so files are a pure function of the
configuration and the seed.

Exit codes: 0 all checks pass, 2 some check failed, 3 configuration or
input error, 4 numerical non-convergence.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from . import acceptance as acc
from . import estimators as est
from . import riesz
from . import transfer as tr
from .kernels import ExponentError
from .measures import MatrixMeasure, MeasureError, load_measure_file, reference_measure
from .output import canonical_json, config_fingerprint, write_csv, write_json
from .projective import ConfigurationError, verify_geometry_suite

COMMANDS = ("lyapunov", "kt-curve", "rate-table", "spectrum", "dimension", "zeta",
            "riesz-selftest", "verify-geometry", "full-report")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_CONVERGENCE = 0, 2, 3, 4

SEED_MAX = 2 ** 64 - 1


@dataclass
class ExperimentConfig:
    """Validated parameters of one run.

    ``x_grid_size`` is an integer, ``"exact"`` for the exact supremum over
    ``x``, or ``None`` for the command default (256 for ``rate-table``,
    exact for ``dimension`` and ``zeta``).
    """

    command: str
    seed: int
    measure_path: str | None = None
    output_dir: str = "out"
    threads: int = 1
    n: int = 20
    samples: int = 100_000
    epsilon: float = 0.05
    N: int = 1024
    t: float = -0.2
    t_grid: list = field(default_factory=lambda: [-0.4, -0.3, -0.2, -0.1, 0.0])
    radii: list | None = None
    x_grid_size: int | str | None = None
    dual: bool = False
    trials: int = 100_000
    kappa_max: float = math.exp(5.0)
    orbit_samples: int = 1_000_000
    tol: float = 1e-10
    max_iters: int = 100_000
    checks: list | None = None
    quick: bool = False

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
        if "command" not in data:
            raise ConfigurationError("command is required")
        if "seed" not in data or data["seed"] is None:
            raise ConfigurationError("seed is required")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        def need(cond: bool, msg: str):
            if not cond:
                raise ConfigurationError(msg)

        def is_int(v) -> bool:
            return isinstance(v, (int, np.integer)) and not isinstance(v, bool)

        need(self.command in COMMANDS, f"unknown command {self.command!r}")
        need(is_int(self.seed) and 0 <= self.seed <= SEED_MAX, "seed must be an integer in [0, 2^64)")
        need(is_int(self.threads) and 1 <= self.threads <= 256, "threads must be in [1, 256]")
        need(is_int(self.n) and 1 <= self.n <= 10_000, "n must be in [1, 10000]")
        need(is_int(self.samples) and 2 <= self.samples <= 10 ** 9, "samples must be in [2, 1e9]")
        need(isinstance(self.epsilon, (int, float)) and 0 < self.epsilon <= 1, "epsilon must be in (0, 1]")
        need(is_int(self.N) and 8 <= self.N <= 1 << 20, "N must be in [8, 2^20]")
        need(isinstance(self.t, (int, float)) and -1 < self.t <= 1, "t must be in (-1, 1]")
        need(isinstance(self.t_grid, list) and len(self.t_grid) >= 1
             and all(isinstance(v, (int, float)) and -1 < v <= 1 for v in self.t_grid),
             "t_grid must be a non-empty list of values in (-1, 1]")
        if self.radii is not None:
            need(isinstance(self.radii, list) and len(self.radii) >= 3
                 and all(isinstance(r, (int, float)) and 0 < r < 1 for r in self.radii),
                 "radii must be a list of at least 3 values in (0, 1)")
        xg = self.x_grid_size
        need(xg is None or xg == "exact" or (is_int(xg) and 4 <= xg <= 1 << 16),
             "x_grid_size must be null, \"exact\" or an integer in [4, 65536]")
        need(isinstance(self.dual, bool), "dual must be a boolean")
        need(is_int(self.trials) and 1 <= self.trials <= 10 ** 8, "trials must be in [1, 1e8]")
        need(isinstance(self.kappa_max, (int, float)) and 1 <= self.kappa_max <= 1e100,
             "kappa_max must be in [1, 1e100]")
        need(is_int(self.orbit_samples) and 1 <= self.orbit_samples <= 10 ** 9,
             "orbit_samples must be in [1, 1e9]")
        need(isinstance(self.tol, (int, float)) and 0 < self.tol < 1, "tol must be in (0, 1)")
        need(is_int(self.max_iters) and 1 <= self.max_iters <= 10 ** 7, "max_iters must be in [1, 1e7]")
        if self.checks is not None:
            need(isinstance(self.checks, list) and all(c in acc.REGISTRY for c in self.checks),
                 f"checks must be a list of ids from {sorted(acc.REGISTRY)}")
        need(isinstance(self.quick, bool), "quick must be a boolean")
        if self.command in ("zeta",):
            need(-1 < self.t <= 0, "zeta needs t in (-1, 0]")

    def grid_size(self, default):
        xg = self.x_grid_size
        if xg is None:
            return default
        return None if xg == "exact" else int(xg)

    def to_mapping(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class Check:
    name: str
    passed: bool
    measured: float
    tolerance: float
    hard: bool = True


@dataclass
class RunReport:
    command: str
    config: dict
    fingerprint: str
    checks: list = field(default_factory=list)
    files: list = field(default_factory=list)
    results: dict = field(default_factory=dict)
    error: dict | None = None
    wall_time: float = math.nan

    @property
    def passed(self) -> bool:
        return self.error is None and all(c.passed for c in self.checks if c.hard)

    def exit_code(self) -> int:
        if self.error is not None:
            return EXIT_CONVERGENCE if self.error.get("kind") == "convergence" else EXIT_CHECK
        return EXIT_OK if self.passed else EXIT_CHECK

    def to_document(self) -> dict:
        # wall time and thread count stay out of files
        stable = {k: v for k, v in self.config.items() if k not in ("threads", "output_dir")}
        return {"command": self.command, "config": stable, "fingerprint": self.fingerprint,
                "version": __version__,
                "checks": [dataclasses.asdict(c) for c in self.checks],
                "passed": self.passed, "results": self.results, "error": self.error,
                "files": self.files}


class Runner:
    """Executes one command and collects files and checks into a report."""

    def __init__(self, config: ExperimentConfig, mu: MatrixMeasure):
        self.cfg = config
        self.mu = mu
        self.out = Path(config.output_dir)
        self.fp = config_fingerprint({**config.to_mapping(), "measure": mu.fingerprint()})
        self.report = RunReport(config.command, config.to_mapping(), self.fp)

    # -- helpers -----------------------------------------------------------

    def header(self, **extra) -> dict:
        h = {"command": self.cfg.command, "config_fingerprint": self.fp,
             "measure_fingerprint": self.mu.fingerprint(), "seed": self.cfg.seed}
        h.update(extra)
        return h

    def emit(self, name: str, columns, rows, **extra) -> None:
        p = write_csv(self.out / name, self.header(**extra), columns, rows)
        self.report.files.append({"name": name, "sha256": hashlib.sha256(p.read_bytes()).hexdigest()})

    def check(self, name: str, passed: bool, measured: float, tolerance: float, hard: bool = True):
        self.report.checks.append(Check(name, bool(passed), float(measured), float(tolerance), hard))

    # -- commands ----------------------------------------------------------

    def lyapunov(self):
        c = self.cfg
        r = est.estimate_lyapunov(self.mu, c.n, c.samples, c.seed, c.threads)
        self.emit("lyapunov.csv", ["n", "samples", "L_hat", "std_err"],
                  [[r.n, r.samples, r.value, r.std_err]])
        self.report.results = {"L_hat": r.value, "std_err": r.std_err}
        self.check("finite standard error", math.isfinite(r.std_err) and r.std_err >= 0, r.std_err, math.inf)

    def kt_curve(self):
        c = self.cfg
        curve = est.estimate_kt_curve(self.mu, c.t_grid, c.n, c.samples, c.seed, c.threads)
        self.emit("kt_curve.csv", ["t", "k_hat", "std_err", "bracket_side"],
                  zip(curve.t_values, curve.k_hat, curve.std_err, curve.bracket_side),
                  n=curve.n_used, samples=curve.samples_used)
        zero = [float(k) for t, k in zip(curve.t_values, curve.k_hat) if t == 0.0]
        if zero:
            self.check("k_hat(0) exactly zero", zero[0] == 0.0, abs(zero[0]), 0.0)
        conv = est.convexity_violations(curve, 3.0)
        self.check("convexity within 3 sigma", not conv, len(conv), 0)
        self.report.results = {"k_hat": curve.k_hat.tolist(), "std_err": curve.std_err.tolist()}

    def _emit_table(self, name: str, table: est.RateTable):
        self.emit(name, ["alpha", "gamma", "hit_count", "total", "prob", "I_hat", "sigma", "x_argmax"],
                  table.rows(), n=table.n, epsilon=table.epsilon,
                  x_grid_size="exact" if table.x_grid_size is None else table.x_grid_size,
                  dual=table.dual)

    def rate_table(self):
        c = self.cfg
        table = est.estimate_rate_table(self.mu, c.n, c.epsilon, c.grid_size(256), c.samples,
                                        c.dual, c.seed, c.threads)
        self._emit_table("rate_table.csv", table)
        finite = table.I_hat[np.isfinite(table.I_hat)]
        top = float(finite.max()) if finite.size else -math.inf
        self.check("I_hat <= 0", top <= 0.0, top, 0.0)
        mono = est.gamma_order_violations(table)["monotone"]
        self.check("nonincreasing in gamma", mono == 0, mono, 0)
        self.report.results = {"entries": int(table.I_hat.size), "finite_entries": int(finite.size)}

    def spectrum(self):
        c = self.cfg
        fwd = tr.leading_triple(tr.build_operator(self.mu, c.t, c.N), c.tol, c.max_iters)
        dl = tr.leading_triple(tr.build_operator(self.mu, c.t, c.N, dual=True), c.tol, c.max_iters)
        rows = zip(tr.grid_nodes(c.N), fwd.eigenfunction.values, fwd.eigenmeasure.weights,
                   dl.eigenmeasure.weights)
        self.emit("spectrum.csv", ["theta", "h_t", "nu_t", "star_nu_t"], rows,
                  t=float(c.t), N=c.N, k_hat=fwd.log_eigenvalue, k_hat_dual=dl.log_eigenvalue,
                  gap_ratio=fwd.gap_ratio, iterations=fwd.iterations)
        lim = 10 * c.tol
        self.check("function residual", fwd.residual_function <= lim, fwd.residual_function, lim)
        self.check("measure residual", fwd.residual_measure <= lim, fwd.residual_measure, lim)
        self.check("dual function residual", dl.residual_function <= lim, dl.residual_function, lim)
        self.check("dual measure residual", dl.residual_measure <= lim, dl.residual_measure, lim)
        self.report.results = {"k_hat": fwd.log_eigenvalue, "k_hat_dual": dl.log_eigenvalue,
                               "gap_ratio": fwd.gap_ratio, "iterations": fwd.iterations,
                               "experimental": c.t > 0}

    def dimension(self):
        c = self.cfg
        radii = acc.DIM_RADII if c.radii is None else np.asarray(c.radii, dtype=float)
        r = acc.dimension_pipeline(self.mu, c.n, c.samples, c.orbit_samples, c.seed, c.threads,
                                   c.epsilon, c.grid_size(None), radii)
        self._emit_table("dual_rate_table.csv", r["table"])
        dim = r["dimension"]
        self.emit("dimension.csv", ["radius", "sup_mass"], zip(dim.radii_used, dim.sup_masses),
                  zeta=r["zeta"], frostman=r["frostman"], difference=r["difference"])
        self.check("zeta matches ball-mass dimension", r["difference"] <= 0.1, r["difference"], 0.1)
        self.report.results = {k: v for k, v in r.items() if k not in ("table", "dimension")}

    def zeta(self):
        c = self.cfg
        r = acc.rate_bound_pipeline(self.mu, float(c.t), c.n, c.samples, c.N, c.seed, c.threads,
                                  c.epsilon, c.grid_size(None))
        self._emit_table("rate_table.csv", r["table"])
        a = r["audit"]
        self.emit("audit_violations.csv", ["alpha", "gamma", "excess"], a["violations"],
                  t=float(c.t), k_hat=r["k"], zeta=r["zeta"])
        self.check("rate bound audit pass fraction", a["fraction"] >= 0.95, a["fraction"], 0.95)
        self.report.results = {"k": r["k"], "zeta": r["zeta"], "zeta_flag": r["zeta_flag"],
                               "audit_passed": a["passed"], "audit_total": a["total"]}

    def riesz_selftest(self):
        c = self.cfg
        n_max = 8 if c.quick else 64
        rows = []
        for t in acc.RIESZ_T:
            for n in range(0, n_max + 1):
                rows.append([t, n, riesz.fourier_coeff_kernel(t, n),
                             riesz.kernel_coefficient_closed_form(t, n)])
        self.emit("kernel_coefficients.csv", ["t", "n", "c_n", "c_n_closed_form"], rows)
        lrows = []
        for t in acc.RIESZ_T:
            lt = riesz.lipschitz_difference_test(t)
            for x, q in zip(lt["points"], lt["quotients"]):
                lrows.append([t, x, q])
        self.emit("lipschitz_quotients.csv", ["t", "x", "quotient"], lrows)
        if c.quick:
            suite = {"kernel_min_coefficient": (min(r[2] for r in rows if r[1] > 0), 1e-12, None)}
            v = suite["kernel_min_coefficient"]
            suite["kernel_min_coefficient"] = (v[0], v[1], v[0] > v[1])
        else:
            suite = acc.riesz_suite(c.seed)
            for k, (val, target, tol, ok) in acc.calibration_suite().items():
                suite[k] = (abs(val - target), tol, ok)
        for k, (val, tol, ok) in suite.items():
            self.check(k, ok, val, tol)
        self.report.results = {k: v[0] for k, v in suite.items()}

    def verify_geometry(self):
        c = self.cfg
        r = verify_geometry_suite(c.trials, float(c.kappa_max), c.seed)
        self.emit("geometry.csv", ["check", "violations"], sorted(r.items()),
                  trials=c.trials, kappa_max=float(c.kappa_max))
        for k, v in sorted(r.items()):
            self.check(k, v == 0, v, 0)
        self.report.results = dict(r)

    def full_report(self):
        c = self.cfg
        results = acc.run_acceptance(c.checks, c.seed, c.threads,
                                     echo=None if self.quiet else print)
        self.emit("acceptance.csv", ["id", "name", "passed", "measured", "tolerance"],
                  [[r.id, r.name, r.passed, r.measured, r.tolerance] for r in results])
        for r in results:
            self.check(f"{r.id}: {r.name}", r.passed, r.measured, r.tolerance)
        self.report.results = {str(r.id): _jsonable(r.details) for r in results}

    def run(self, quiet: bool = False) -> RunReport:
        self.quiet = quiet
        getattr(self, self.cfg.command.replace("-", "_"))()
        return self.report


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError("config must be a JSON object")
    return data


def resolve_measure(config: ExperimentConfig) -> MatrixMeasure:
    if config.measure_path is None:
        return reference_measure()
    try:
        return load_measure_file(config.measure_path)
    except OSError as exc:
        raise ConfigurationError(f"cannot read measure: {exc}") from exc


def run(config: ExperimentConfig, quiet: bool = False) -> RunReport:
    """Run one command; writes files and ``report.json`` under ``output_dir``.

    Configuration problems propagate as exceptions. Non-convergence and
    estimator failures are recorded in the report.
    """
    mu = resolve_measure(config)
    runner = Runner(config, mu)
    t0 = time.perf_counter()
    try:
        runner.run(quiet)
    except tr.ConvergenceError as exc:
        hist = list(exc.history[-8:]) if exc.history else []
        runner.report.error = {"kind": "convergence", "message": str(exc), "last_log_factors": hist}
    except est.EstimatorError as exc:
        runner.report.error = {"kind": "estimator", "message": str(exc)}
    runner.report.wall_time = time.perf_counter() - t0
    runner.report.results = _jsonable(runner.report.results)
    write_json(runner.out / "report.json", runner.report.to_document())
    return runner.report


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

OVERRIDES = {
    "n": int, "samples": int, "epsilon": float, "N": int, "t": float, "trials": int,
    "kappa_max": float, "orbit_samples": int, "tol": float, "max_iters": int,
}


def _float_list(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _grid_size(text: str):
    if text == "exact":
        return "exact"
    try:
        return int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError("expected an integer or 'exact'") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="furstenberg-lab", description=__doc__.split("\n")[0])
    p.add_argument("command_pos", nargs="?", choices=COMMANDS, metavar="COMMAND",
                   help=f"one of: {', '.join(COMMANDS)}")
    p.add_argument("--command", choices=COMMANDS)
    p.add_argument("--config", help="JSON file with ExperimentConfig fields")
    p.add_argument("--measure", dest="measure_path", help="JSON measure file (default: reference measure)")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", dest="output_dir")
    for name, typ in OVERRIDES.items():
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=typ)
    p.add_argument("--t-grid", dest="t_grid", type=_float_list, help="comma separated t values")
    p.add_argument("--radii", type=_float_list, help="comma separated radii")
    p.add_argument("--x-grid-size", dest="x_grid_size", type=_grid_size)
    p.add_argument("--dual", action="store_true", default=None)
    p.add_argument("--checks", type=lambda s: [int(v) for v in s.split(",")],
                   help="comma separated acceptance check ids (full-report)")
    p.add_argument("--quick", action="store_true", default=None)
    p.add_argument("--version", action="version", version=__version__)
    return p


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    data = load_config_file(args.config) if args.config else {}
    cmd = args.command or args.command_pos
    if args.command and args.command_pos and args.command != args.command_pos:
        raise ConfigurationError("conflicting commands")
    if cmd:
        data["command"] = cmd
    skip = {"config", "command", "command_pos"}
    for k, v in vars(args).items():
        if k not in skip and v is not None:
            data[k] = v
    return ExperimentConfig.from_mapping(data)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        config = config_from_args(args)
        report = run(config)
    except (ConfigurationError, MeasureError, ExponentError) as exc:
        payload = {"error": "configuration", "message": str(exc)}
        print(canonical_json(payload), file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        payload = {"error": "io", "message": str(exc)}
        print(canonical_json(payload), file=sys.stderr)
        return EXIT_CONFIG
    for c in report.checks:
        status = "PASS" if c.passed else "FAIL"
        print(f"[{status}] {c.name}: measured={c.measured:.6g} tolerance={c.tolerance:.6g}")
    if report.error is not None:
        print(canonical_json({"error": report.error}), file=sys.stderr)
    print(f"command={config.command} threads={config.threads} wall_time={report.wall_time:.3f}s "
          f"exit={report.exit_code()} out={config.output_dir}")
    return report.exit_code()


if __name__ == "__main__":
    sys.exit(main())
