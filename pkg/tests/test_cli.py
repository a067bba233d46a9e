from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from furstenberg_lab import cli
from furstenberg_lab.output import read_csv
from furstenberg_lab.projective import ConfigurationError

ROTATION_MEASURE = {"atoms": [
    {"matrix": [[0.5403023058681398, -0.8414709848078965], [0.8414709848078965, 0.5403023058681398]],
     "weight": 0.5},
    {"matrix": [[0.15594369476537437, -0.98776594599274], [0.98776594599274, 0.15594369476537437]],
     "weight": 0.5},
]}


def write(tmp_path: Path, name: str, obj) -> str:
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(p)


def test_verify_geometry_seed1(tmp_path, capsys):
    code = cli.main(["verify-geometry", "--seed", "1", "--trials", "20000", "--out", str(tmp_path)])
    assert code == cli.EXIT_OK
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["passed"] and all(v == 0 for v in rep["results"].values())
    assert "wall_time" in capsys.readouterr().out


def test_kt_curve_rotation_flat(tmp_path):
    m = write(tmp_path, "rot.json", ROTATION_MEASURE)
    out = tmp_path / "o"
    code = cli.main(["kt-curve", "--seed", "3", "--measure", m, "--n", "16", "--samples", "2000",
                     "--out", str(out)])
    assert code == cli.EXIT_OK
    header, cols, rows = read_csv(out / "kt_curve.csv")
    k = np.array([float(r[cols.index("k_hat")]) for r in rows])
    assert np.max(np.abs(k)) <= 1e-12


def test_missing_seed(tmp_path, capsys):
    assert cli.main(["lyapunov", "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "configuration" and "seed" in err["message"]


def test_unknown_config_key(tmp_path):
    c = write(tmp_path, "c.json", {"command": "lyapunov", "seed": 1, "bogus": 2})
    assert cli.main(["--config", c]) == cli.EXIT_CONFIG


@pytest.mark.parametrize("doc", [
    {"atoms": []},
    {"atoms": [{"matrix": [[2, 0], [0, 1]], "weight": 1.0}]},
    {"atoms": [{"matrix": [[1, 0], [0, 1]], "weight": 0.7}]},
    "{not json",
])
def test_bad_measure(tmp_path, doc):
    m = write(tmp_path, "m.json", doc)
    assert cli.main(["lyapunov", "--seed", "1", "--measure", m, "--out", str(tmp_path)]) == cli.EXIT_CONFIG


def test_missing_measure_file(tmp_path):
    assert cli.main(["lyapunov", "--seed", "1", "--measure", str(tmp_path / "none.json")]) == cli.EXIT_CONFIG


@pytest.mark.parametrize("argv", [
    ["lyapunov", "--seed", "1", "--n", "0"],
    ["lyapunov", "--seed", "-1"],
    ["rate-table", "--seed", "1", "--epsilon", "0"],
    ["spectrum", "--seed", "1", "--N", "4"],
    ["zeta", "--seed", "1", "--t", "0.5"],
    ["nonsense", "--seed", "1"],
    ["lyapunov", "--command", "spectrum", "--seed", "1"],
])
def test_invalid_arguments(tmp_path, argv):
    assert cli.main(argv + ["--out", str(tmp_path)]) == cli.EXIT_CONFIG


def test_config_validation_direct():
    with pytest.raises(ConfigurationError, match="seed"):
        cli.ExperimentConfig.from_mapping({"command": "lyapunov"})
    cfg = cli.ExperimentConfig.from_mapping({"command": "rate-table", "seed": 0, "x_grid_size": "exact"})
    assert cfg.grid_size(256) is None
    assert cli.ExperimentConfig.from_mapping({"command": "rate-table", "seed": 0}).grid_size(256) == 256


def test_convergence_exit(tmp_path, capsys):
    code = cli.main(["spectrum", "--seed", "0", "--N", "64", "--max-iters", "2", "--out", str(tmp_path)])
    assert code == cli.EXIT_CONVERGENCE
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["error"]["kind"] == "convergence" and rep["error"]["last_log_factors"]


def test_check_failure_exit(tmp_path):
    # a loose residual target that the run cannot meet
    code = cli.main(["spectrum", "--seed", "0", "--N", "64", "--tol", "1e-17", "--max-iters", "200000",
                     "--out", str(tmp_path)])
    assert code in (cli.EXIT_CHECK, cli.EXIT_CONVERGENCE)


def test_config_file_and_flags_merge(tmp_path):
    c = write(tmp_path, "c.json", {"command": "lyapunov", "seed": 5, "n": 4, "samples": 1000})
    out = tmp_path / "o"
    assert cli.main(["--config", c, "--n", "6", "--out", str(out)]) == cli.EXIT_OK
    header, cols, rows = read_csv(out / "lyapunov.csv")
    assert rows[0][cols.index("n")] == "6"
    assert header["seed"] == "5"


def run_bytes(tmp_path: Path, tag: str, argv: list) -> dict:
    out = tmp_path / tag
    code = cli.main(argv + ["--out", str(out)])
    assert code in (cli.EXIT_OK, cli.EXIT_CHECK)
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


@pytest.mark.parametrize("argv", [
    ["lyapunov", "--seed", "11", "--n", "12", "--samples", "150000"],
    ["rate-table", "--seed", "11", "--n", "6", "--samples", "140000"],
    ["kt-curve", "--seed", "2", "--n", "8", "--samples", "70000"],
])
def test_thread_count_does_not_change_bytes(tmp_path, argv):
    a = run_bytes(tmp_path, "t1", argv + ["--threads", "1"])
    b = run_bytes(tmp_path, "t8", argv + ["--threads", "8"])
    assert a == b and "report.json" in a


def test_csv_format(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["rate-table", "--seed", "4", "--n", "5", "--samples", "5000", "--out", str(out)]) == 0
    raw = (out / "rate_table.csv").read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    header, cols, rows = read_csv(out / "rate_table.csv")
    rep = json.loads((out / "report.json").read_text())
    assert header["config_fingerprint"] == rep["fingerprint"]
    assert cols[:3] == ["alpha", "gamma", "hit_count"]
    assert all(len(r) == len(cols) for r in rows)
    assert {f["name"] for f in rep["files"]} == {"rate_table.csv"}


def test_fingerprint_ignores_threads_and_out(tmp_path):
    base = {"command": "lyapunov", "seed": 1}
    a = cli.ExperimentConfig.from_mapping({**base, "threads": 1, "output_dir": "x"})
    b = cli.ExperimentConfig.from_mapping({**base, "threads": 8, "output_dir": "y"})
    c = cli.ExperimentConfig.from_mapping({**base, "seed": 2})
    from furstenberg_lab.output import config_fingerprint
    assert config_fingerprint(a.to_mapping()) == config_fingerprint(b.to_mapping())
    assert config_fingerprint(a.to_mapping()) != config_fingerprint(c.to_mapping())


def test_riesz_selftest_quick(tmp_path):
    assert cli.main(["riesz-selftest", "--seed", "0", "--quick", "--out", str(tmp_path)]) == cli.EXIT_OK
    header, cols, rows = read_csv(tmp_path / "kernel_coefficients.csv")
    assert len(rows) == 3 * 9


def test_full_report_subset(tmp_path):
    code = cli.main(["full-report", "--seed", "0", "--checks", "2,3,4", "--out", str(tmp_path)])
    assert code == cli.EXIT_OK
    header, cols, rows = read_csv(tmp_path / "acceptance.csv")
    assert [r[0] for r in rows] == ["2", "3", "4"]
