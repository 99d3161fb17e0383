import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from graphweyl import cli
from graphweyl.cli import EXIT_CONFIG, EXIT_CONSTRUCTION, EXIT_INVARIANT, EXIT_OK, main, parse_angle
from graphweyl.errors import NoBlockStructureFound
from graphweyl.quantize import ComplexUnitary, doubling_unitary

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def report(out, command):
    return json.loads((out / f"{command}_report.json").read_text())


def test_parse_angle():
    assert parse_angle("pi/4") == pytest.approx(np.pi / 4)
    assert parse_angle("2pi") == pytest.approx(2 * np.pi)
    assert parse_angle("2*pi/3") == pytest.approx(2 * np.pi / 3)
    assert parse_angle(0.5) == 0.5
    assert parse_angle("-pi") == pytest.approx(-np.pi)


def test_build(tmp_path):
    cfg = write(tmp_path, "c.toml", 'map = "doubling"\nn = [6, 64]\n')
    out = tmp_path / "out"
    assert main(["build", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    rep = report(out, "build")
    assert rep["passed"] and rep["library_version"]
    assert (out / "P_n6.csv").exists()
    U = ComplexUnitary.load(out / "U_n64.bin")
    np.testing.assert_array_equal(U.matrix, doubling_unitary(64).matrix)


def test_build_json_custom_map(tmp_path):
    cfg = write(tmp_path, "c.json", json.dumps({"map": str(CONFIGS / "custom_map.json"), "n": [16]}))
    out = tmp_path / "out"
    assert main(["build", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    assert report(out, "build")["results"][0]["provenance"] == "block_dft"


def test_odd_n_is_config_error(tmp_path, capsys):
    cfg = write(tmp_path, "c.toml", 'map = "doubling"\nn = [7]\n')
    assert main(["build", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err


def test_missing_config(tmp_path):
    assert main(["build", "--config", str(tmp_path / "nope.toml")]) == EXIT_CONFIG


def test_bad_toml(tmp_path):
    cfg = write(tmp_path, "c.toml", "n = [\n")
    assert main(["build", "--config", str(cfg)]) == EXIT_CONFIG


def test_construction_failure_exit(tmp_path, monkeypatch):
    def boom(config, out, seed=None):
        raise NoBlockStructureFound("no nesting", 0)

    monkeypatch.setitem(cli.COMMANDS, "build", boom)
    cfg = write(tmp_path, "c.toml", "n = [4]\n")
    assert main(["build", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONSTRUCTION


def test_weyl(tmp_path):
    cfg = write(
        tmp_path,
        "c.toml",
        'map = "doubling"\nn = [256]\nr = 3\n[arcs]\nwidths = ["pi/2"]\npositions = 4\noffset = 0.1\n',
    )
    out = tmp_path / "out"
    assert main(["weyl", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    rep = report(out, "weyl")
    arcs = [r for r in rep["results"] if "envelope" in r]
    assert len(arcs) == 4 and all(r["passed"] for r in arcs)
    assert (out / "hist_n256_arc0.csv").read_text().startswith("bin_left,bin_right,count,gaussian_pdf_reference")


def test_weyl_cutoff_too_large(tmp_path):
    cfg = write(tmp_path, "c.toml", 'n = [64]\nr = 6\n')
    assert main(["weyl", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_qe(tmp_path):
    cfg = write(
        tmp_path,
        "c.toml",
        'n = [64, 256]\nobservables = ["cos(2pi x)", 1.0]\n[arcs]\nkappa = 2\n[thresholds]\nvariance_max = 0.05\n',
    )
    out = tmp_path / "out"
    assert main(["qe", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    rep = report(out, "qe")
    assert rep["passed"] and len(rep["egorov"]) == 4
    assert (out / "variance_cos_2pi_x.csv").exists()


def test_perturb_deterministic(tmp_path):
    cfg = write(tmp_path, "c.toml", 'n = [128]\nkappa = 2\n[thresholds]\nque_max = 0.5\n')
    outs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        assert main(["perturb", "--config", str(cfg), "--seed", "99", "--out", str(out)]) == EXIT_OK
        rep = report(out, "perturb")
        rep.pop("timestamp")
        outs.append(rep)
    assert outs[0] == outs[1]
    assert outs[0]["seed"] == 99


def test_perturb_needs_seed(tmp_path):
    cfg = write(tmp_path, "c.toml", "n = [16]\n")
    assert main(["perturb", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_doubling2k(tmp_path):
    cfg = write(tmp_path, "c.toml", "K = [4, 6]\nr = 2\n")
    out = tmp_path / "out"
    assert main(["doubling2k", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    rep = report(out, "doubling2k")
    assert [r["K"] for r in rep["results"]] == [4, 6]
    assert sum(rep["results"][1]["multiplicities"]) == 64
    assert len((out / "multiplicities.csv").read_text().splitlines()) == 1 + 16 + 24


def test_failcoord(tmp_path, capsys):
    cfg = write(tmp_path, "c.toml", "n = [64, 256]\n")
    out = tmp_path / "out"
    assert main(["failcoord", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    assert "series constant 0.391826" in capsys.readouterr().out
    assert report(out, "failcoord")["passed"]


def test_invariant_exit(tmp_path):
    cfg = write(tmp_path, "c.toml", 'n = [64]\n[thresholds]\nvariance_max = 1e-9\n')
    assert main(["qe", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_INVARIANT


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, "c.json", json.dumps({"n": [8]}))
    proc = subprocess.run(
        [sys.executable, "-m", "graphweyl", "build", "--config", str(cfg), "--out", str(tmp_path / "o")],
        capture_output=True,
        text=True,
        env={"GRAPHWEYL_THREADS": "1", "PATH": "/usr/bin:/bin"},
    )
    assert proc.returncode == 0, proc.stderr


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*") if p.name != "custom_map.json"))
def test_shipped_configs_parse(name):
    from graphweyl.io import load_config

    assert isinstance(load_config(CONFIGS / name), dict)
