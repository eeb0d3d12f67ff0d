import csv
import json

import numpy as np
import pytest

from rlftn import matio
from rlftn.cli import main
from rlftn.report import csv_header, validate

CHAIN = """\
model = chain
S = 0.5
L = 6
h = 1.0
chi = 8
delta_e = 1e-8
seed = 4
"""


@pytest.fixture(autouse=True)
def no_env_out(monkeypatch):
    monkeypatch.delenv("RLFTN_OUT", raising=False)


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(CHAIN)
    return p


def header_of(path):
    with open(path, newline="") as fh:
        return next(csv.reader(fh))


def test_factorize_diag_binary(tmp_path, capsys):
    src = tmp_path / "d.bin"
    matio.write_binary(src, np.diag([3.0, 2.0, 1.0]))
    out = tmp_path / "f"
    assert main(["factorize", str(src), "--rank", "2", "--out", str(out)]) == 0
    assert (out / "spectrum.csv").read_text().strip() == "3,2"
    assert capsys.readouterr().out.strip() == "3,2"
    summary = json.loads((out / "factorization.json").read_text())
    validate(summary, "factorization.schema.json")
    assert summary["frobenius_error"] == pytest.approx(1.0)
    assert matio.read_binary(out / "left.bin").shape == (3, 2)


def test_factorize_rsvd_csv(tmp_path):
    src = tmp_path / "m.csv"
    rng = np.random.default_rng(0)
    A = rng.standard_normal((20, 6)) @ rng.standard_normal((6, 15))
    matio.write_csv(src, A)
    out = tmp_path / "f"
    assert main(["factorize", str(src), "--rank", "6", "--method", "rsvd", "--seed", "3",
                 "--out", str(out)]) == 0
    summary = json.loads((out / "factorization.json").read_text())
    assert summary["frobenius_error"] <= 1e-10 * np.linalg.norm(A)
    assert not summary["discarded_exact"]


def test_factorize_errors(tmp_path, capsys):
    assert main(["factorize", str(tmp_path / "none.bin"), "--rank", "1"]) == 3
    capsys.readouterr()
    src = tmp_path / "d.bin"
    matio.write_binary(src, np.eye(3))
    assert main(["factorize", str(src), "--rank", "5", "--json-errors",
                 "--out", str(tmp_path / "o")]) == 2
    err = json.loads(capsys.readouterr().err)
    validate(err, "error.schema.json")
    assert err["exit_code"] == 2


def test_run_tebd_outputs_and_determinism(tmp_path, cfg_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run-tebd", "--config", str(cfg_path), "--out", str(a), "--check",
                 "--spectra-trace"]) == 0
    assert main(["run-tebd", "--config", str(cfg_path), "--out", str(b), "--no-figures"]) == 0
    ra = json.loads((a / "report.json").read_text())
    rb = json.loads((b / "report.json").read_text())
    validate(ra, "run_report.schema.json")
    assert json.dumps(ra["observables"]) == json.dumps(rb["observables"])
    assert ra["seed"]["master"] == 4
    for name in ("history.csv", "entropy.csv", "spectra.csv", "spectra_trace.csv"):
        assert header_of(a / name) == csv_header(name)
    for name in ("history.png", "entropy.png", "spectrum.png"):
        assert (a / name).stat().st_size > 0
    assert not (b / "history.png").exists()
    assert ra["reference"]["rel_error"] <= 1e-5


def test_seed_flag_changes_start(tmp_path, cfg_path):
    assert main(["run-tebd", "--config", str(cfg_path), "--seed", "9", "--out", str(tmp_path),
                 "--no-figures"]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["seed"]["master"] == 9


def test_env_overrides_out(tmp_path, cfg_path, monkeypatch):
    env_dir = tmp_path / "env"
    monkeypatch.setenv("RLFTN_OUT", str(env_dir))
    assert main(["run-tebd", "--config", str(cfg_path), "--out", str(tmp_path / "flag"),
                 "--no-figures"]) == 0
    assert (env_dir / "report.json").exists()
    assert not (tmp_path / "flag").exists()


def test_analyze_report(tmp_path, cfg_path):
    run = tmp_path / "run"
    main(["run-tebd", "--config", str(cfg_path), "--out", str(run), "--no-figures"])
    out = tmp_path / "an"
    assert main(["analyze", str(run / "report.json"), "--fit", "calabrese", "--out", str(out)]) == 0
    fits = json.loads((out / "fits.json").read_text())
    validate(fits, "fits.schema.json")
    assert "c" in fits["calabrese"]["params"]
    assert (out / "entropy.png").exists()


def test_analyze_without_spectra_fails(tmp_path, cfg_path, capsys):
    run = tmp_path / "run"
    main(["run-tebd", "--config", str(cfg_path), "--out", str(run), "--no-figures"])
    rep = json.loads((run / "report.json").read_text())
    rep["observables"]["spectra"] = {}
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(rep))
    code = main(["analyze", str(bad), "--fit", "powerlaw", "--out", str(tmp_path / "o")])
    assert code != 0
    assert "spectra" in capsys.readouterr().err


def test_config_errors_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text(CHAIN.replace("chi = 8", "chi = 0"))
    assert main(["run-tebd", "--config", str(p), "--json-errors"]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigError"
    assert main(["run-tebd"]) == 2


def test_bench_compare_tebd_grid(tmp_path):
    p = tmp_path / "grid.cfg"
    p.write_text(CHAIN.replace("h = 1.0", "h = 1.0\nh_grid = 0.5, 1.5\nmin_rsvd_dim = 4"))
    out = tmp_path / "b"
    assert main(["bench-compare", "--config", str(p), "--out", str(out), "--check"]) == 0
    summary = json.loads((out / "bench.json").read_text())
    validate(summary, "bench_summary.schema.json")
    assert len(summary["points"]) == 2
    assert header_of(out / "bench.csv") == csv_header("bench.csv")
    assert (out / "bench.png").exists()


def test_bench_dscaling_mode(tmp_path):
    out = tmp_path / "d"
    assert main(["bench-compare", "--mode", "dscaling", "-d", "4", "6", "--rank", "8",
                 "--repeats", "1", "--out", str(out)]) == 0
    assert header_of(out / "dscaling.csv") == csv_header("dscaling.csv")
    assert (out / "dscaling.png").exists()
