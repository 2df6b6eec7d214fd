import json
import subprocess
import sys

import pytest

from cmvkit import cli
from cmvkit.cmv import EigenSolverError


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


FREE = {"family": {"kind": "constant", "alpha": [0, 0]}, "params": {"n": 50}}


def run(args):
    return cli.main(args)


def test_dos_smoke(tmp_path):
    out = tmp_path / "o"
    assert run(["dos", "--config", write(tmp_path, FREE), "--out", str(out)]) == 0
    rows = (out / "dos.csv").read_text().splitlines()
    assert rows[0] == "theta,weight" and len(rows) == 1 + 101
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["params"]["n"] == 50
    assert man["config"]["params"]["ladder"] == {"m_lo": 4, "m_hi": 14, "tol": 0.001}
    assert man["version"] == cli.__version__
    assert man["artifacts"] == ["dos.csv", "dos.json"]


@pytest.mark.parametrize("cfg,msg", [
    ({"family": {"kind": "constant", "alpha": [1.5, 0]}}, "bound"),
    ({"family": {"kind": "wat"}}, "unknown family"),
    ({"family": {"kind": "quasiperiodic", "coupling": 0.3, "frequency": 0.4}}, "periodic"),
    ({"family": {"kind": "constant", "alpha": 0.1}, "params": {"n": -3}}, "n must"),
    ({"family": {"kind": "constant", "alpha": 0.1}, "params": {"bogus": 1}}, "unknown params"),
    ({"family": {"kind": "constant", "alpha": 0.1}, "params": {"boundary": [1, 0.5]}}, "unimodular"),
    ({"family": {"kind": "constant", "alpha": 0.1}, "params": {"ladder": {"m_lo": 9, "m_hi": 3}}}, "ladder"),
    ({"family": {"kind": "constant", "alpha": 0.4, "cap": 0.3}}, "cap"),
    ({"family": {"kind": "constant", "alpha": 0.1}, "task": "schur"}, "task"),
    ({"plan": {}}, "family"),
])
def test_config_errors_exit_1_without_files(tmp_path, capsys, cfg, msg):
    out = tmp_path / "o"
    assert run(["dos", "--config", write(tmp_path, cfg), "--out", str(out)]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config" and msg in err["message"]
    assert not out.exists()


def test_unreadable_config(tmp_path, capsys):
    assert run(["dos", "--config", str(tmp_path / "missing.json")]) == 1
    (tmp_path / "bad.json").write_text("{nope")
    assert run(["dos", "--config", str(tmp_path / "bad.json")]) == 1


def test_schur_task_rejects_points_outside_disk(tmp_path):
    cfg = {"family": {"kind": "constant", "alpha": 0.1}, "params": {"z": [[1.2, 0]]}}
    assert run(["schur", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 1


def test_numerical_failure_exit_2(tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise EigenSolverError("no convergence")
    monkeypatch.setattr(cli, "density_of_states", boom)
    out = tmp_path / "o"
    assert run(["dos", "--config", write(tmp_path, FREE), "--out", str(out)]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "numerical"
    assert not out.exists()


def test_manifest_round_trip_and_seed_override(tmp_path):
    cfg = {"family": {"kind": "random_iid", "radius": 0.5, "seed": 7},
           "plan": {"mode": "montecarlo", "count": 2}, "params": {"z": [0.5, [0, 0.5]], "length": 300}}
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["lyapunov", "--config", write(tmp_path, cfg), "--out", str(a), "--seed", "9"]) == 0
    man = json.loads((a / "manifest.json").read_text())
    assert man["overrides"]["seed"] == 9
    assert man["config"]["family"]["seed"] == 9 and man["config"]["plan"]["seed"] == 9
    assert run(["lyapunov", "--config", str(a / "manifest.json"), "--out", str(b)]) == 0
    assert (a / "lyapunov.csv").read_bytes() == (b / "lyapunov.csv").read_bytes()


def test_env_output_override(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert run(["schur", "--config", write(tmp_path, FREE)]) == 0
    man = json.loads((tmp_path / "env" / "manifest.json").read_text())
    assert man["overrides"]["output"] == str(tmp_path / "env")
    header = (tmp_path / "env" / "schur.csv").read_text().splitlines()[0]
    assert header.startswith("z_re,z_im,f_plus_re")


def test_zeroset_and_check_tasks(tmp_path):
    cfg = {"family": {"kind": "constant", "alpha": [0.5, 0]},
           "params": {"grid": 64, "length": 2000, "n": 60}}
    out = tmp_path / "z"
    assert run(["zeroset", "--config", write(tmp_path, cfg), "--out", str(out)]) == 0
    assert json.loads((out / "zeroset.json").read_text())["empty"] is False
    out = tmp_path / "t"
    assert run(["theorem1", "--config", write(tmp_path, cfg), "--out", str(out)]) == 0
    rep = json.loads((out / "theorem1.json").read_text())
    assert rep["name"] == "theorem1" and "sup" in rep


def test_identities_task(tmp_path):
    cfg = {"family": {"kind": "constant", "alpha": [0, 0]},
           "params": {"grid": 64, "length": 1000, "n": 60, "thouless_n": 60, "z": [0.5, 0.0],
                      "theta": [1.0]}}
    out = tmp_path / "i"
    assert run(["identities", "--config", write(tmp_path, cfg), "--out", str(out)]) == 0
    names = json.loads((out / "manifest.json").read_text())["artifacts"]
    assert {"gamma_schur.json", "thouless.json", "bigcalc.json"} <= set(names)


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "cmvkit.cli", "dos", "--config",
                           write(tmp_path, FREE), "--out", str(tmp_path / "o"), "--threads", "2"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.strip().endswith("manifest.json")
