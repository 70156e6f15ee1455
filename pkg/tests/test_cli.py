import gzip

import numpy as np
import pytest

from enscond import cli
from enscond.geometry import locate_sector
from enscond.report import read_report, read_table

S8_TOML = 'name = "S8"\nmu = [1, 2, 3, 4]\ndelta_pair = [0, 0, 0, 0]\na = 1.0\n'


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "s8.toml"
    p.write_text(S8_TOML)
    return p


def _run(*argv):
    return cli.main([str(a) for a in argv])


def test_validate(cfg, tmp_path):
    assert _run("validate", "--config", cfg, "--out", tmp_path / "o") == 0
    man = read_report(tmp_path / "o" / "manifest.txt")
    out = read_report(tmp_path / "o" / "validate.txt")
    assert out["manifest_hash"] == man["manifest_hash"]
    assert float(out["B0"]) == 8.0 and float(out["B1"]) == 20.0


def test_validate_errors(tmp_path, capsys):
    p = tmp_path / "n3.toml"
    p.write_text("mu = [1, 2, 3]\n")
    assert _run("validate", "--config", p) == cli.EXIT_INVALID
    assert "n >= 4" in capsys.readouterr().err
    p.write_text("mu = [1, 3, 2, 4]\n")
    assert _run("validate", "--config", p) == cli.EXIT_INVALID
    p.write_text("mu = [1, 2,\n")
    assert _run("validate", "--config", p) == cli.EXIT_IO
    assert _run("validate", "--config", tmp_path / "missing.toml") == cli.EXIT_IO


def test_qtable(cfg, tmp_path):
    out = tmp_path / "q"
    assert _run("qtable", "--config", cfg, "--grid", 100, "--out", out) == 0
    header, rows = read_table(out / "qtable.txt")
    assert header[:3] == ["u", "v", "sector"] and header[-1] == "min_gap"
    assert len(rows) == 100 * 100
    from enscond.spectrum import s8

    s = s8()
    col = {h: i for i, h in enumerate(header)}
    for r in rows:
        u, v = float(r[0]), float(r[1])
        scale = max(u, 1.0)
        for k in ("r_u", "r_v", "r_weighted"):
            assert abs(float(r[col[k]])) <= 1e-9 * scale
        assert float(r[col["min_gap"]]) >= -1e-9 * u
        assert r[2] == locate_sector(s, (u, v)).label()
        if u == v:
            q = [float(x) for x in r[3:7]]
            assert q == [u, 0.0, 0.0, 0.0]
    assert (out / "qtable.txt").read_text().startswith("# manifest_hash = " + read_report(out / "manifest.txt")["manifest_hash"])


def test_simulate_reproducible(cfg, tmp_path):
    args = ["simulate", "--config", cfg, "--steps", 3000, "--chains", 4, "--seed", 3, "--dump-trajectory"]
    assert _run(*args, "--out", tmp_path / "a") == 0
    assert _run(*args, "--out", tmp_path / "b") == 0
    assert _run(*args, "--gzip", "--out", tmp_path / "c") == 0
    for name in ("stats.txt", "trajectory.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert gzip.decompress((tmp_path / "c" / "trajectory.txt.gz").read_bytes()) == (tmp_path / "a" / "trajectory.txt").read_bytes()
    st = read_report(tmp_path / "a" / "stats.txt")
    assert float(st["mean.U"]) > float(st["mean.V"])
    assert st["safeguard.steps"] == "0"


def test_simulate_threads_env(cfg, tmp_path, monkeypatch):
    args = ["simulate", "--config", cfg, "--steps", 2000, "--chains", 70]
    assert _run(*args, "--out", tmp_path / "a") == 0
    monkeypatch.setenv("ENSCOND_THREADS", "2")
    assert _run(*args, "--out", tmp_path / "b") == 0
    assert read_report(tmp_path / "b" / "manifest.txt")["threads"] == "2"
    assert (tmp_path / "a" / "stats.txt").read_bytes() == (tmp_path / "b" / "stats.txt").read_bytes()


def test_simulate_absurd_step(cfg, tmp_path, capsys):
    assert _run("simulate", "--config", cfg, "--dt", 1, "--steps", 2000, "--out", tmp_path) == cli.EXIT_STEP
    assert "dt" in capsys.readouterr().err


def test_verify_report(cfg, tmp_path):
    out = tmp_path / "v"
    code = _run("verify", "--config", cfg, "--samples", 200_000, "--steps", 20_000, "--chains", 32, "--grid", 30, "--out", out)
    rep = read_report(out / "report.txt")
    assert rep["seed"] == "0" and rep["spectrum.mu"] == "1.0 2.0 3.0 4.0"
    assert (rep["lyapunov.alpha0"], rep["lyapunov.beta0"], rep["lyapunov.gamma0"]) == ("0.25", "0.25", "0.5")
    failed = int(rep["summary.failed"])
    assert code == (cli.EXIT_FAILED_CHECKS if failed else 0)
    assert failed == 0, {k: v for k, v in rep.items() if v.startswith("fail")}


def test_verify_unequal_delta(tmp_path):
    p = tmp_path / "g.toml"
    p.write_text("mu = [1, 2, 3, 4]\ndelta_pair = [0, -0.2, -0.4, -0.6]\n")
    _run("verify", "--config", p, "--samples", 20_000, "--steps", 4000, "--chains", 8, "--grid", 16, "--out", tmp_path)
    rep = read_report(tmp_path / "report.txt")
    assert "conservation.status" in rep and "conservation.spectral_residual" in rep
    assert rep["stationary_law.moments.status"] == "skipped: δ not constant"
    assert rep["condensation.exact.status"] == "skipped: δ not constant"


def test_manifest_hash_ignores_threads_and_paths(cfg, tmp_path):
    _run("qtable", "--config", cfg, "--grid", 5, "--threads", 1, "--out", tmp_path / "a")
    _run("qtable", "--config", cfg, "--grid", 5, "--threads", 4, "--out", tmp_path / "b")
    _run("qtable", "--config", cfg, "--grid", 6, "--out", tmp_path / "c")
    h = [read_report(tmp_path / d / "manifest.txt")["manifest_hash"] for d in "abc"]
    assert h[0] == h[1] != h[2]
    assert np.array_equal(
        np.array(read_table(tmp_path / "a" / "qtable.txt")[1]), np.array(read_table(tmp_path / "b" / "qtable.txt")[1])
    )
