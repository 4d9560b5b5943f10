import hashlib
import json
import subprocess
import sys

import pytest

from plurigreen.cli import main

DISK = """version: 1
command: green
green:
  domain: {kind: disk, radii: [1.0], resolution: 64}
  background: {base: zero}
  singularities:
    - {position: [0.3], epsilon: 0.5, f: [z], r_in: 0.3, r_out: 0.5}
  solver: {max_sweeps: %d}
"""


def write(tmp_path, text, name="run.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def digests(path):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(path.glob("*.csv"))}


def test_disk_oracle_run_succeeds(tmp_path):
    out = tmp_path / "out"
    assert main(["green", "--config", write(tmp_path, DISK % 100000), "--out", str(out)]) == 0
    names = {p.name for p in out.iterdir()}
    assert {"G.csv", "phi.csv", "density.csv", "report.txt", "run.log", "manifest.json"} <= names
    report = (out / "report.txt").read_text()
    err = float(next(l for l in report.splitlines() if l.startswith("oracle_sup_error=")).split("=")[1])
    assert err < 0.1
    header = (out / "G.csv").read_text().splitlines()[0]
    assert header == "re_z1,im_z1,value"
    man = json.loads((out / "manifest.json").read_text())
    listed = {f["name"] for f in man["files"]}
    assert listed == names - {"manifest.json"}
    for f in man["files"]:
        assert f["sha256"] == hashlib.sha256((out / f["name"]).read_bytes()).hexdigest()
    assert man["exit_code"] == 0 and "total" in man["timings"]


def test_forced_nonconvergence_exits_one_with_partial_outputs(tmp_path):
    out = tmp_path / "out"
    assert main(["green", "--config", write(tmp_path, DISK % 1), "--out", str(out)]) == 1
    assert (out / "G.csv").exists() and (out / "manifest.json").exists()
    assert "status=partial" in (out / "report.txt").read_text()
    assert "NonConvergence" in (out / "run.log").read_text()


@pytest.mark.parametrize("text", ["version: 1\ncommand: green\ngreen: {domain: [1, 2\n",
                                  "version: 1\ncommand: green\ngreen: {domain: {kind: cube}}\n",
                                  "version: 1\ncommand: verify\nverify: {suite: nonsense}\n",
                                  "version: 1\ncommand: torus\n"])
def test_config_errors_exit_two_and_write_nothing(tmp_path, text):
    out = tmp_path / "out"
    assert main(["green", "--config", write(tmp_path, text), "--out", str(out)]) == 2
    assert not out.exists()


def test_missing_config_file(tmp_path):
    assert main(["green", "--config", str(tmp_path / "absent.yaml")]) == 2


def test_bad_seed_is_usage_error(tmp_path):
    assert main(["torus", "--config", write(tmp_path, "version: 1\ncommand: torus\n"), "--seed", "-1"]) == 2


def test_outputs_are_deterministic(tmp_path):
    cfg = write(tmp_path, DISK % 100000)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["green", "--config", cfg, "--out", str(a), "--seed", "7"]) == 0
    assert main(["green", "--config", cfg, "--out", str(b), "--seed", "7"]) == 0
    assert digests(a) == digests(b) and digests(a)


def test_thread_limit_env_var(tmp_path, monkeypatch):
    cfg = write(tmp_path, "version: 1\ncommand: torus\ntorus: {resolution: 16, sigma_study: false}\n")
    monkeypatch.setenv("PLURIGREEN_THREADS", "zero")
    assert main(["torus", "--config", cfg, "--out", str(tmp_path / "x")]) == 2
    monkeypatch.setenv("PLURIGREEN_THREADS", "1")
    assert main(["torus", "--config", cfg, "--out", str(tmp_path / "y")]) == 0


def test_rerun_replaces_previous_outputs(tmp_path):
    out = tmp_path / "out"
    t = write(tmp_path, "version: 1\ncommand: torus\ntorus: {resolution: 16, sigma_study: false}\n")
    r = write(tmp_path, "version: 1\ncommand: ray\nray: {resolution: 16, T: 1.0}\n", "ray.yaml")
    assert main(["torus", "--config", t, "--out", str(out)]) == 0
    assert main(["ray", "--config", r, "--out", str(out)]) == 0
    assert not (out / "density.csv").exists()
    assert (out / "u.csv").exists()


def test_console_script_entry_point(tmp_path):
    cfg = write(tmp_path, "version: 1\ncommand: blowup\nblowup: {K: {per_axis: 5}, stage2: null}\n")
    res = subprocess.run([sys.executable, "-m", "plurigreen.cli", "blowup", "--config", cfg,
                          "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
