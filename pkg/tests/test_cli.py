import csv
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from mhdlab.cli import SolverConfig, identity_suite, main
from mhdlab.errors import ConfigError

ROOT = Path(__file__).resolve().parents[1]
REFERENCE = ROOT / "configs" / "reference.cfg"
ZERO = ROOT / "configs" / "zero_forcing.cfg"
# ratio printed by the first validated build for configs/reference.cfg
GOLDEN_RATIO = 0.27991258372492572


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def test_missing_dt_names_the_key(tmp_path, capsys):
    text = "\n".join(l for l in REFERENCE.read_text().splitlines() if not l.startswith("grid.dt"))
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    with pytest.raises(ConfigError, match="grid.dt"):
        SolverConfig.from_file(cfg)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "grid.dt" in capsys.readouterr().err


@pytest.mark.parametrize("line,key", [("reg.epsilon = 1.5", "reg.epsilon"), ("reg.gamma = 0.5", "reg.gamma"),
                                      ("grid.N2 = 6", "grid.N2"), ("state.family = round", "state.family")])
def test_invalid_values(line, key):
    text = REFERENCE.read_text() + "\n" + line + "\n"
    with pytest.raises(ConfigError, match=key):
        SolverConfig.from_text(text)


def test_identities_pass(capsys):
    assert main(["identities", "--seed", "1", "--draws", "100"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") >= 30


def test_identities_without_draws(capsys):
    assert main(["identities", "--draws", "0"]) == 0
    assert "PASS" not in capsys.readouterr().out


def test_identities_detect_a_corrupted_builder(capsys):
    assert main(["identities", "--seed", "1", "--draws", "5", "--inject-fault"]) == 1
    assert "FAIL symmetric A0" in capsys.readouterr().out


def test_identity_suite_is_deterministic():
    a, fa = identity_suite(7, 10)
    b, fb = identity_suite(7, 10)
    assert a == b and not fa and not fb


def test_validate_state(capsys):
    assert main(["validate-state", "--config", str(REFERENCE)]) == 0
    out = capsys.readouterr().out
    assert "stability margin: 1" in out and out.strip().endswith("PASS")


def test_dump_matrices(tmp_path):
    out = tmp_path / "m.txt"
    assert main(["dump-matrices", "--seed", "3", "--out", str(out)]) == 0
    blocks = {}
    tag = None
    for line in out.read_text().splitlines():
        if line.startswith("# "):
            tag = line[2:]
            blocks[tag] = []
        else:
            blocks[tag].append([float(x) for x in line.split()])
    A0 = np.array(blocks["A0"])
    assert A0.shape == (8, 8) and np.max(np.abs(A0 - A0.T)) <= 1e-12 * np.max(np.abs(A0))
    np.testing.assert_array_equal(np.array(blocks["E12"])[[0, 1], [1, 0]], [1, 1])


def test_dump_matrices_from_config(tmp_path):
    out = tmp_path / "m.txt"
    assert main(["dump-matrices", "--config", str(REFERENCE), "--out", str(out)]) == 0
    assert "# wall plasma matrix" in out.read_text()


def test_zero_forcing_run(tmp_path):
    assert main(["run", "--config", str(ZERO), "--out", str(tmp_path)]) == 0
    header, data = read_csv(tmp_path / "energy.csv")
    assert header[0] == "t" and len(data) > 1
    norms = [header.index(c) for c in ("plasma_h1tan", "vacuum_h1", "trace_h12", "front_h1")]
    assert not data[:, norms].any()


def test_reference_run_matches_golden(tmp_path, capsys):
    assert main(["run", "--config", str(REFERENCE), "--out", str(tmp_path / "ref")]) == 0
    line = capsys.readouterr().out
    ratio = float(line.split("ratio=")[1].split()[0])
    assert 0.2799 <= ratio <= 0.2800
    assert ratio == pytest.approx(GOLDEN_RATIO, rel=1e-9)
    header, data = read_csv(tmp_path / "ref" / "energy.csv")
    assert data[:, header.index("plasma_h1tan")].max() > 0


def test_run_is_deterministic(tmp_path):
    for d in ("a", "b"):
        assert main(["run", "--config", str(REFERENCE), "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "a" / "energy.csv").read_bytes() == (tmp_path / "b" / "energy.csv").read_bytes()


def test_gamma_sweep(tmp_path):
    assert main(["sweep", "--config", str(REFERENCE), "--param", "gamma", "--values", "4,8,16",
                 "--out", str(tmp_path)]) == 0
    header, data = read_csv(tmp_path / "sweep.csv")
    assert header == ["gamma", "lhs", "rhs", "ratio"] and data.shape == (3, 4)
    assert data[:, 3].max() / data[:, 3].min() <= 10


def test_epsilon_sweep(tmp_path, monkeypatch):
    monkeypatch.setenv("MHD_LAB_THREADS", "3")
    assert main(["sweep", "--config", str(REFERENCE), "--param", "epsilon", "--values", "0.1,0.01,0.001",
                 "--out", str(tmp_path)]) == 0
    _, data = read_csv(tmp_path / "sweep.csv")
    assert data.shape == (3, 4)
    assert data[:, 3].max() / data[:, 3].min() <= 10


def test_M_sweep(tmp_path):
    assert main(["sweep", "--param", "M", "--values", "4,16,64", "--out", str(tmp_path)]) == 0
    header, data = read_csv(tmp_path / "sweep.csv")
    assert header == ["M", "sup_d1psi", "sup_over_h2"]
    steps = data[1:, 1] / data[:-1, 1]
    # the shipped cutoff decays like 1/M: a quarter per quadrupling
    np.testing.assert_allclose(steps, 0.25, rtol=0.05)


def test_bad_sweep_parameter(capsys):
    assert main(["sweep", "--param", "delta", "--values", "1"]) == 2


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "mhdlab", "identities", "--draws", "3"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "PASS" in r.stdout
