import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from fracheat.harness.cli import main
from fracheat.harness.config import KINDS, ConfigError, load_config, parse_config
from fracheat.harness.gridfile import GridFileError, decode, encode, grid_roundtrip, read_grid, write_grid
from fracheat.harness.runner import RunError, run
from fracheat.parabolic import GriddedField, SpaceTimeGrid

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL = """
[experiment]
kind = sample
seed = 4

[sheet]
H1 = 0.5
H2 = 0.8
n = 3

[grid]
t_min = 0.0
t_max = 0.5
nt = 9
x_min = -0.5
x_max = 0.5
nx = 17

[sample]
fields = sheet, noise
"""


def _field(nt, nx, seed=0):
    g = SpaceTimeGrid(-0.5, 1.5, nt, -2.0, 2.0, nx)
    return GriddedField(g, np.random.default_rng(seed).standard_normal((nt, nx)))


@pytest.mark.parametrize("nt, nx", [(2, 2), (17, 33), (65, 9)])
def test_grid_roundtrip(tmp_path, nt, nx):
    f = _field(nt, nx)
    back = grid_roundtrip(f, tmp_path / "f.fhg")
    assert back.grid == f.grid
    assert np.array_equal(back.values, f.values)
    assert read_grid(tmp_path / "f.fhg").values.tobytes() == f.values.tobytes()


@given(arrays(np.float64, (3, 4), elements=st.floats(allow_nan=False)))
def test_encode_decode(values):
    axes = [(0.0, 1.0, 3), (-1.0, 1.0, 4)]
    got_axes, got = decode(encode(axes, values))
    assert [tuple(a) for a in got_axes] == axes
    assert got.tobytes() == np.ascontiguousarray(values).tobytes()


def test_grid_truncated(tmp_path):
    p = tmp_path / "f.fhg"
    write_grid(p, _field(5, 5))
    p.write_bytes(p.read_bytes()[:-20])
    with pytest.raises(GridFileError, match="checksum"):
        read_grid(p)


def test_grid_corrupted(tmp_path):
    p = tmp_path / "f.fhg"
    write_grid(p, _field(5, 5))
    data = bytearray(p.read_bytes())
    data[40] ^= 0x01
    p.write_bytes(bytes(data))
    with pytest.raises(GridFileError, match="checksum"):
        read_grid(p)


def test_encode_shape_mismatch():
    with pytest.raises(GridFileError):
        encode([(0.0, 1.0, 3)], np.zeros(4))


def test_all_configs_parse():
    files = sorted(CONFIGS.glob("c*.ini"))
    assert len(files) == 13
    for f in files:
        cfg = load_config(f)
        assert cfg.kind in KINDS
        assert cfg.hurst_pairs() or cfg.kind == "kernel"


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="colour"):
        parse_config(SMALL + "colour = red\n")


def test_unknown_section_rejected():
    with pytest.raises(ConfigError):
        parse_config(SMALL + "[extras]\nx = 1\n")


def test_kind_mismatch_rejected():
    with pytest.raises(ConfigError):
        parse_config(SMALL, kind="solve")


def test_hurst_range_rejected():
    with pytest.raises(ConfigError):
        parse_config(SMALL.replace("H2 = 0.8", "H2 = 1.2"))


def test_missing_hurst_creates_nothing(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(SMALL.replace("H2 = 0.8\n", ""))
    out = tmp_path / "out"
    assert main(["sample", "--config", str(cfg), "--out", str(out)]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["status"] == "error" and err["stage"] == "validation" and "H2" in err["message"]
    assert not out.exists()


def test_runs_are_byte_identical(tmp_path):
    cfg = parse_config(SMALL)
    a = run(cfg, tmp_path / "a")
    b = run(cfg, tmp_path / "b")
    assert a.files == b.files
    for name in a.files + ["manifest.ini", "summary.json"]:
        if name == "manifest.ini":
            continue  # records its own output directory
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_csv_header_comment(tmp_path):
    rep = run(parse_config(SMALL), tmp_path / "o")
    csvs = [f for f in rep.files if f.endswith(".csv")]
    assert csvs
    for name in csvs:
        first = (tmp_path / "o" / name).read_text().splitlines()[0]
        assert first.startswith("# units:")


def test_nonempty_output_refused(tmp_path):
    (tmp_path / "junk").write_text("x")
    with pytest.raises(RunError):
        run(parse_config(SMALL), tmp_path)


def test_seed_override_changes_output(tmp_path):
    cfg = parse_config(SMALL)
    run(cfg, tmp_path / "a")
    run(cfg.replace(seed=5), tmp_path / "b")
    assert (tmp_path / "a" / "sheet.fhg").read_bytes() != (tmp_path / "b" / "sheet.fhg").read_bytes()


def test_cli_run_and_manifest_regenerates(tmp_path, capsys):
    cfg = tmp_path / "small.ini"
    cfg.write_text(SMALL)
    first = tmp_path / "first"
    assert main(["sample", "--config", str(cfg), "--out", str(first), "--threads", "1"]) == 0
    ok = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert ok["status"] == "ok"
    second = tmp_path / "second"
    assert main(["run", "--config", str(first / "manifest.ini"), "--out", str(second)]) == 0
    for name in ok["files"]:
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_cli_runtime_error_code(tmp_path, capsys):
    cfg = tmp_path / "small.ini"
    cfg.write_text(SMALL)
    out = tmp_path / "busy"
    out.mkdir()
    (out / "x").write_text("x")
    assert main(["sample", "--config", str(cfg), "--out", str(out)]) == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "RunError" and err["stage"] == "sample"


def test_cli_threads_env(tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "small.ini"
    cfg.write_text(SMALL)
    monkeypatch.setenv("FRACHEAT_THREADS", "2")
    assert main(["sample", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert "# threads = 2" in (tmp_path / "o" / "manifest.ini").read_text()
    monkeypatch.setenv("FRACHEAT_THREADS", "many")
    assert main(["sample", "--config", str(cfg), "--out", str(tmp_path / "p")]) == 2


def test_cli_inspect(tmp_path, capsys):
    p = tmp_path / "f.fhg"
    write_grid(p, _field(3, 4))
    assert main(["inspect", str(p)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["t"] == [-0.5, 1.5, 3] and info["x"] == [-2.0, 2.0, 4]
    p.write_bytes(p.read_bytes()[:-1])
    assert main(["inspect", str(p)]) == 2


def test_console_script(tmp_path):
    env = dict(os.environ, FRACHEAT_THREADS="1")
    proc = subprocess.run([sys.executable, "-m", "fracheat.harness.cli", "inspect", str(tmp_path / "none.fhg")],
                          capture_output=True, text=True, env=env)
    assert proc.returncode == 2
    assert json.loads(proc.stderr)["status"] == "error"
