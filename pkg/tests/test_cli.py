import json

import pytest

from subgeo.cli import list_presets, main, preset_table
from subgeo.config import parse_config
from subgeo.csvio import CERTIFICATE_COLUMNS, RESULT_COLUMNS
from subgeo.errors import ConfigError

SMALL = """\
experiment_id: small
model: {tag: ou_geometric}
lyapunov: {tag: quadratic}
phi: {family: linear, params: {c: 1.0}}
set_C: {kind: ball, params: {radius: 2.0}}
b: 3.0
sim: {dt: 0.01, horizon: 10.0, n_paths: 600, seed: 9, chunk_size: 256}
pipeline:
  - {op: certificate, mode: verify}
  - {op: modulated_moments, x0: [3.0], deltas: [0.1]}
"""


@pytest.fixture
def small(tmp_path):
    f = tmp_path / "small.yaml"
    f.write_text(SMALL)
    return f


def test_parse_reports_key_and_line():
    bad = SMALL.replace("seed: 9, ", "")
    with pytest.raises(ConfigError, match=r"sim\.seed.*line 7"):
        parse_config(bad)
    with pytest.raises(ConfigError, match=r"pipeline\[1\]\.op.*line 10"):
        parse_config(SMALL.replace("op: modulated_moments", "op: nope"))
    with pytest.raises(ConfigError, match="unknown key: key 'colour'"):
        parse_config(SMALL + "colour: red\n")
    with pytest.raises(ConfigError, match="not valid YAML"):
        parse_config("a: [1, 2\n")


def test_presets_listing(capsys):
    rows = preset_table()
    names = {r["name"] for r in rows}
    assert len(rows) == 7
    assert {"ou_geometric_smoke", "ell1_theorem31", "mdp_ou"} <= names
    assert main(["presets", "--format", "csv"]) == 0
    out = capsys.readouterr().out
    lines = out.splitlines()
    assert lines[0] == "name,version,anchor" and len(lines) == 8
    assert "ou_geometric_smoke  v1" in list_presets()


def test_run_writes_outputs_and_replays(small, tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["run", str(small), "--output-dir", str(out)]) == 0
    res = (out / "results.csv").read_text().splitlines()
    assert res[0] == ",".join(RESULT_COLUMNS)
    assert (out / "certificate.csv").read_text().splitlines()[0] == ",".join(CERTIFICATE_COLUMNS)
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 9 and set(man["outputs"]) == {"results.csv", "certificate.csv"}
    assert main(["replay", str(out / "manifest.json")]) == 0
    capsys.readouterr()


def test_thread_count_does_not_change_bytes(small, tmp_path, monkeypatch, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(small), "--output-dir", str(a), "--threads", "1"]) == 0
    monkeypatch.setenv("SUBGEO_THREADS", "3")
    assert main(["run", str(small), "--output-dir", str(b)]) == 0
    assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()
    monkeypatch.setenv("SUBGEO_THREADS", "many")
    assert main(["run", str(small), "--output-dir", str(b)]) == 1
    capsys.readouterr()


def test_seed_override_changes_output(small, tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["run", str(small), "--output-dir", str(a)])
    main(["run", str(small), "--output-dir", str(b), "--seed-override", "10"])
    assert json.loads((b / "manifest.json").read_text())["seed"] == 10
    assert (a / "results.csv").read_bytes() != (b / "results.csv").read_bytes()
    capsys.readouterr()


def test_exit_codes(small, tmp_path, capsys):
    failing = tmp_path / "fail.yaml"
    failing.write_text(SMALL.replace("b: 3.0", "b: 0.0"))
    assert main(["run", str(failing), "--output-dir", str(tmp_path / "f")]) == 2
    assert main(["run", "no_such_preset"]) == 1
    assert main(["replay", str(tmp_path / "missing.json")]) == 1
    out = tmp_path / "o"
    main(["run", str(small), "--output-dir", str(out)])
    man = json.loads((out / "manifest.json").read_text())
    man["preset"] = {"name": "ou_geometric_smoke", "version": 99}
    stale = tmp_path / "stale.json"
    stale.write_text(json.dumps(man))
    assert main(["replay", str(stale)]) == 1
    err = capsys.readouterr().err
    assert "not bundled" in err
