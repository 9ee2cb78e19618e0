import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acsplit.cli import main
from acsplit.config import (ExperimentConfig, format_number, load_config, parse_config,
                            parse_number, preset_names, serialize_config)
from acsplit.errors import ConfigurationError

SMALL = """
[scheme]
K = 16
T = 0.25
dt = 2^-5
x0 = bump a=1 w=0.3

[noise]
kind = diagonal
gamma = 1.1

[error]
samples = 12

[rates]
dts = 2^-4, 2^-5, 2^-6
dt_ref = 2^-9

[run]
seed = 11
name = small
"""


def test_parse_number():
    assert parse_number("2^-13", "k") == 2.0**-13
    assert parse_number(" 0.001 ", "k") == 0.001
    with pytest.raises(ConfigurationError):
        parse_number("fast", "k")


@given(st.integers(-30, -1))
def test_format_powers_of_two(e):
    assert format_number(2.0**e) == f"2^{e}"
    assert parse_number(format_number(2.0**e), "k") == 2.0**e


@settings(max_examples=50)
@given(st.floats(1e-6, 1e6, allow_nan=False))
def test_format_round_trip(x):
    assert parse_number(format_number(x), "k") == x


def test_small_config():
    cfg = parse_config(SMALL)
    assert cfg.scheme.K == 16 and cfg.dts == (2.0**-4, 2.0**-5, 2.0**-6)
    assert cfg.scheme.noise.gamma == 1.1 and cfg.error.samples == 12
    assert cfg.name == "small" and cfg.seed == 11


@pytest.mark.parametrize("name", preset_names())
def test_presets_round_trip(name):
    cfg = load_config(name)
    assert isinstance(cfg, ExperimentConfig)
    text = serialize_config(cfg)
    assert parse_config(text) == cfg
    assert serialize_config(parse_config(text)) == text


def test_expected_presets_present():
    names = set(preset_names())
    for n in ("white-noise-quarter", "trace-class-half", "h1-noise-order-one", "moments-white",
              "moments-gamma2", "exp-integrability-gamma2", "zero-noise-probe"):
        assert n in names


@pytest.mark.parametrize("text,key", [
    (SMALL.replace("dt_ref = 2^-9", "dt_ref = 0.003"), "rates.dt_ref"),
    (SMALL.replace("dt_ref = 2^-9", "dt_ref = 2^-7"), "rates.dt_ref"),
    (SMALL.replace("dt_ref = 2^-9", "dt_ref = 2^-9\nspeed = 3"), "rates.speed"),
    (SMALL + "\n[extra]\na = 1\n", "extra"),
    (SMALL.replace("K = 16", "K = 1.5"), "scheme.K"),
    (SMALL.replace("gamma = 1.1", "gamma = -1"), "noise.gamma"),
    (SMALL.replace("dt = 2^-5", "dt = 0.3"), "scheme.dt"),
])
def test_bad_configs_name_the_key(text, key):
    with pytest.raises(ConfigurationError) as info:
        parse_config(text)
    assert info.value.key == key


def test_unknown_preset():
    with pytest.raises(ConfigurationError):
        load_config("no-such-preset")


# -- command line ------------------------------------------------------------------------------

@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL)
    return path


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text(SMALL.replace("dt_ref = 2^-9", "dt_ref = 0.003"))
    assert main(["rates", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "rates.dt_ref" in capsys.readouterr().err


def test_cli_rates_writes_outputs(small_cfg, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["rates", "--config", str(small_cfg), "--out", str(out)]) == 0
    assert "slope=" in capsys.readouterr().out
    report = json.loads((out / "small.json").read_text())
    assert len(report["dts"]) == 3 and report["meta"]["seed"] == 11
    assert (out / "small.csv").read_text().startswith("dt,error,stderr")
    assert (out / "small_long.csv").read_text().startswith("dt,sample_stat,value")


def test_cli_bit_repro(small_cfg, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["rates", "--config", str(small_cfg), "--out", str(a), "--bit-repro"]) == 0
    assert main(["rates", "--config", str(small_cfg), "--out", str(b), "--bit-repro"]) == 0
    for f in ("small.json", "small.csv", "small_long.csv"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_cli_seed_override_changes_result(small_cfg, tmp_path):
    main(["rates", "--config", str(small_cfg), "--out", str(tmp_path / "a")])
    main(["rates", "--config", str(small_cfg), "--out", str(tmp_path / "b"), "--seed", "12"])
    ra = json.loads((tmp_path / "a" / "small.json").read_text())
    rb = json.loads((tmp_path / "b" / "small.json").read_text())
    assert ra["errors"] != rb["errors"] and rb["meta"]["seed"] == 12


def test_cli_probe_zero_noise(tmp_path):
    assert main(["probe", "--config", "zero-noise-probe", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "zero-noise-probe_probe.json").read_text())
    (row,) = report["results"]
    assert all(r["estimate"] == 0 for r in row["moments"].values())
    assert all(r["estimate"] == 1 for r in row["exp"].values())


def test_cli_probe_huge_c(tmp_path, capsys):
    assert main(["probe", "--config", "exp-integrability-huge-c", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "exp-integrability-huge-c_probe.json").read_text())
    for r in report["results"][0]["exp"].values():
        assert r["tail_count"] > 0 and r["estimate"] == "inf"
    assert "tail_count" in capsys.readouterr().out


def test_cli_run_blowup(tmp_path, capsys):
    assert main(["run", "--config", "run-plain-blowup", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "diverged at step" in out
    step = int(out.split("diverged at step")[1].split()[0])
    assert 1 <= step <= 10
    lines = (tmp_path / "run-plain-blowup_trajectory.csv").read_text().splitlines()
    assert lines[0] == "t,L2,L4,sup,H1,H2"


def test_cli_run_sine(tmp_path, capsys):
    assert main(["run", "--config", "run-sine", "--out", str(tmp_path)]) == 0
    assert "diverged" not in capsys.readouterr().out


def test_cli_selftest(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "10/10 checks passed" in out


def test_cli_selftest_detects_corrupted_constant(capsys):
    assert main(["selftest", "--corrupt", "one_sided=0.1"]) == 1
    out = capsys.readouterr().out
    assert "FAIL  psi_one_sided" in out
