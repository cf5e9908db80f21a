from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from fracflow.cli import caputo_table, main, parse_config, parse_preset, sin_caputo_reference
from fracflow.errors import ConfigError
from fracflow.flow import StepRecord

DEMOS = Path(__file__).resolve().parents[1] / "demos"

FLAT = """
[scenario]
name = flat
[chart]
count = 8
[metric]
preset = flat
[flow]
alpha = {alpha}
step = 1e-3
steps = {steps}
potential = F
[output]
path = {out}
format = {fmt}
"""


def write(tmp_path, text, name="cfg.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def read_csv(path):
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    rows = np.array([[float(c) for c in line.split(",")] for line in lines[1:]])
    return header, rows


def test_flat_run_csv(tmp_path):
    out = tmp_path / "flat.csv"
    cfg = write(tmp_path, FLAT.format(alpha=0.7, steps=100, out=out, fmt="csv"))
    assert main(["run", "--config", str(cfg)]) == 0
    header, rows = read_csv(out)
    assert tuple(header) == StepRecord.COLUMNS
    assert rows.shape == (100, len(header))
    assert np.max(np.abs(rows[:, header.index("F")])) <= 1e-10
    np.testing.assert_array_equal(rows[:, 0], np.arange(1, 101))


def test_output_is_deterministic_and_17_digit(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"r{k}.csv"
        cfg = write(tmp_path, FLAT.format(alpha=1.0, steps=5, out=out, fmt="csv"), f"c{k}.ini")
        assert main(["run", "--config", str(cfg)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    row = outs[0].decode().splitlines()[2].split(",")
    assert row[1] == "%.17g" % 0.002


def test_jsonl_output_and_out_override(tmp_path):
    out = tmp_path / "override.jsonl"
    cfg = write(tmp_path, FLAT.format(alpha=1.0, steps=3, out=tmp_path / "unused.jsonl", fmt="jsonl"))
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    recs = [json.loads(line) for line in out.read_text().splitlines()]
    assert len(recs) == 3 and list(recs[0]) == list(StepRecord.COLUMNS)
    assert not (tmp_path / "unused.jsonl").exists()


def test_sphere_scenario_shrinks(tmp_path):
    out = tmp_path / "sphere.csv"
    cfg = write(tmp_path, f"""
[metric]
preset = sphere-h
[chart]
count = 24, 24, 8
[flow]
step = 1e-4
steps = 40
[output]
path = {out}
""")
    assert main(["run", "--config", str(cfg)]) == 0
    header, rows = read_csv(out)
    chi, gmin = rows[:, header.index("chi")], rows[:, header.index("g_min_eig")]
    assert np.all(np.diff(gmin) < 0)
    np.testing.assert_allclose(gmin / gmin[0], (1 - 2 * chi) / (1 - 2 * chi[0]), rtol=1e-2)


@pytest.mark.parametrize("text,field", [
    ("[flow]\nalpha = 1.5\n", "flow.alpha"),
    ("[flow]\nalpha = abc\n", "flow.alpha"),
    ("[flow]\nsteps = 0\n", "flow.steps"),
    ("[flow]\nmode = ricci\n", "flow.mode"),
    ("[chart]\ncount = 4\n", "chart.count"),
    ("[chart]\ncount = 8, 8\n", "chart.count"),
    ("[metric]\npreset = torus\n", "metric.preset"),
    ("[metric]\npreset = custom\nh = 1, 2, 2, 1\n", "metric.h"),
    ("[nconnection]\npreset = constant\nconstant = 1\n", "nconnection.constant"),
    ("[output]\nformat = xml\n", "output.format"),
    ("[bogus]\nx = 1\n", "bogus"),
])
def test_config_errors_name_the_field(tmp_path, capsys, text, field):
    cfg = write(tmp_path, text + "[output]\npath = x.csv\n" if "[output]" not in text else text + "path = x.csv\n")
    assert main(["run", "--config", str(cfg)]) == 1
    assert field in capsys.readouterr().err
    with pytest.raises(ConfigError) as info:
        parse_config(cfg.read_text())
    assert info.value.field == field


def test_unparseable_config_reports_line(tmp_path, capsys):
    cfg = write(tmp_path, "[flow\nalpha = 0.5\n")
    assert main(["run", "--config", str(cfg)]) == 1
    assert "line" in capsys.readouterr().err


def test_missing_output_path(tmp_path, capsys):
    cfg = write(tmp_path, "[flow]\nsteps = 1\n")
    assert main(["run", "--config", str(cfg)]) == 1
    assert "output.path" in capsys.readouterr().err


def test_singularity_exit_code_keeps_rows(tmp_path, capsys):
    out = tmp_path / "sing.csv"
    cfg = write(tmp_path, f"""
[metric]
preset = sphere-h
[chart]
count = 12, 12, 8
[flow]
step = 0.02
steps = 40
[output]
path = {out}
""")
    assert main(["run", "--config", str(cfg)]) == 2
    assert "singularity" in capsys.readouterr().err
    header, rows = read_csv(out)
    assert 1 <= rows.shape[0] < 40


def test_polynomial_nconnection_and_custom_metric(tmp_path):
    cfg = parse_config("""
[chart]
lower = 0
upper = 1
count = 8
periodic = false
[metric]
preset = custom
h = 2, 0.1, 0.1, 1
v = 1.5
[nconnection]
preset = polynomial
constant = 0.1, -0.2
linear = 1, 0, 0,  0, 0, 2
""")
    x1, x2, y = cfg.chart.coordinates()
    np.testing.assert_allclose(cfg.nconn.coefficients[..., 0, 0], 0.1 + x1)
    np.testing.assert_allclose(cfg.nconn.coefficients[..., 1, 0], -0.2 + 2 * y)
    np.testing.assert_allclose(cfg.metric.h[0, 0, 0], [[2, 0.1], [0.1, 1]])


def test_thread_env(tmp_path, monkeypatch, capsys):
    out = tmp_path / "t.csv"
    cfg = write(tmp_path, FLAT.format(alpha=1.0, steps=1, out=out, fmt="csv"))
    monkeypatch.setenv("FRACFLOW_THREADS", "1")
    assert main(["run", "--config", str(cfg)]) == 0
    monkeypatch.setenv("FRACFLOW_THREADS", "many")
    assert main(["run", "--config", str(cfg)]) == 1
    assert "FRACFLOW_THREADS" in capsys.readouterr().err


def test_caputo_presets():
    x, num, ref = caputo_table("constant", 0.5, 64)
    assert np.max(np.abs(num - ref)) <= 1e-14
    x, num, ref = caputo_table("power(2)", 0.5, 1024)
    mask = x >= 0.05
    assert np.max(np.abs(num - ref)[mask] / ref[mask]) <= 1e-3
    errs = []
    for count in (64, 128):
        x, num, ref = caputo_table("sin", 1.0, count)
        errs.append(np.max(np.abs(num - ref)))
    assert errs[1] < errs[0] / 3.5
    assert parse_preset("power:1.5") == ("power", 1.5)
    with pytest.raises(ConfigError):
        parse_preset("cosh")


def test_sin_reference_series():
    x = np.linspace(0, 1, 11)
    np.testing.assert_allclose(sin_caputo_reference(x, 1.0), np.cos(x))
    # alpha -> 1 limit of the series is cos away from the terminal point
    np.testing.assert_allclose(sin_caputo_reference(x[1:], 1.0 - 1e-9, terms=30), np.cos(x[1:]), atol=1e-7)
    x, num, ref = caputo_table("sin", 0.4, 512)
    assert np.max(np.abs(num - ref)) < 1e-4


def test_caputo_command_output(capsys):
    assert main(["caputo", "--preset", "power(2)", "--alpha", "0.5", "--count", "16"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "x,numerical,reference,abs_error"
    assert len(lines) == 17
    assert main(["caputo", "--preset", "nope", "--alpha", "0.5"]) == 1
    assert main(["caputo", "--preset", "sin", "--alpha", "2"]) == 1


def test_selftest_subset_and_mutation(capsys):
    assert main(["selftest", "--only", "2", "4", "5"]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 3
    assert main(["selftest", "--only", "5", "--inject", "candcon-sign"]) == 1
    out = capsys.readouterr().out
    assert "[FAIL] criterion  5 metricity identity" in out


def test_bad_arguments_exit_one(capsys):
    assert main(["bogus"]) == 1
    assert main([]) == 1


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "fracflow", "caputo", "--preset", "constant", "--alpha", "0.3",
                          "--count", "5"], capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert len(res.stdout.splitlines()) == 6


@pytest.mark.parametrize("name", ["flat_torus", "twisted"])
def test_demo_configs_parse_and_run(tmp_path, name):
    out = tmp_path / f"{name}.csv"
    assert main(["run", "--config", str(DEMOS / f"{name}.ini"), "--out", str(out)]) == 0
    assert out.exists()
