import subprocess
import sys
from pathlib import Path

import pytest

from bsdefund.cli import main
from bsdefund.config import load_config, parse_config
from bsdefund.errors import InvalidConfigError
from bsdefund.market import THREADS_ENV

BASE = """\
d = 1
horizon = 1.0
s0 = [100.0]
mu = [0.05]
sigma = [[0.2]]
rate_l = 0.01
rate_b = {rate_b}
rate_ib = [{rate_ib}]
n_steps = 10
n_paths = 10000
seed = 3
basis_degree = 3
{extra}
"""

CALL = """
[[cash_flows]]
time = 1.0
kind = "call"
strike = 100.0
amount = -1.0
asset = 1
"""


def write(tmp_path, name="run.toml", rate_b=0.03, rate_ib=0.02, extra="", flows=CALL):
    path = tmp_path / name
    path.write_text(BASE.format(rate_b=rate_b, rate_ib=rate_ib, extra=extra) + flows)
    return path


def run(*args):
    return main([str(a) for a in args])


def test_validate_ok_and_ordering_failure(tmp_path, capsys):
    assert run("validate", "--config", write(tmp_path)) == 0
    bad = write(tmp_path, "bad.toml", extra="", rate_b=0.005)
    assert run("validate", "--config", bad) == 1
    assert "violated: rate_l <= rate_b" in capsys.readouterr().out


def test_malformed_numeric_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text(write(tmp_path).read_text().replace("rate_l = 0.01", "rate_l = 0.0.1"))
    assert run("validate", "--config", path) == 2
    assert "line" in capsys.readouterr().err
    path.write_text(write(tmp_path).read_text().replace("rate_l = 0.01", 'rate_l = "low"'))
    assert run("price", "--config", path) == 2
    assert "rate_l" in capsys.readouterr().err


def test_unknown_key_is_named(tmp_path, capsys):
    assert run("validate", "--config", write(tmp_path, extra="volatility = 3")) == 2
    assert "'volatility'" in capsys.readouterr().err
    with pytest.raises(InvalidConfigError, match="'strik'"):
        parse_config({"d": 1, "horizon": 1.0, "s0": [1.0], "mu": [0.0], "sigma": [[0.2]], "rate_l": 0.0,
                      "rate_b": 0.0, "rate_ib": [0.0], "cash_flows": [{"time": 1.0, "strik": 3.0}]})


def test_missing_config_and_usage(tmp_path, capsys):
    assert run("price") == 2
    assert run("price", "--config", tmp_path / "missing.toml") == 2
    with pytest.raises(SystemExit) as info:
        run("frobnicate")
    assert info.value.code == 2


def test_config_values(tmp_path):
    cfg = load_config(write(tmp_path, extra="x1 = 1.5\ncollateral = \"proportional\"\ncollateral_ratio = 0.25"),
                      seed=11)
    assert cfg.seed == 11 and cfg.x1 == 1.5 and cfg.grid.n_steps == 10
    assert cfg.contract.cash_flows[0].asset == 0 and cfg.contract.collateral_ratio == 0.25
    with pytest.raises(InvalidConfigError):
        load_config(write(tmp_path, "neg.toml", extra="x2 = -1.0"))
    with pytest.raises(InvalidConfigError):
        load_config(write(tmp_path, "asset.toml", flows=CALL.replace("asset = 1", "asset = 2")))
    with pytest.raises(InvalidConfigError):
        load_config(write(tmp_path, "gen.toml", extra='generator = "quadratic"'))


def test_price_zero_contract(tmp_path, capsys):
    assert run("price", "--config", write(tmp_path, flows=""), "--out", tmp_path) == 0
    out = capsys.readouterr().out
    values = [float(line.split("=")[1].split()[0]) for line in out.splitlines()[:2]]
    assert values == [0.0, 0.0]
    rows = (tmp_path / "prices.csv").read_text().splitlines()
    assert rows[0] == "t,P_h,P_c,stderr" and len(rows) == 12


def test_price_single_rate_oracle(tmp_path, capsys):
    assert run("price", "--config", write(tmp_path, rate_b=0.01, rate_ib=0.01), "--out", tmp_path) == 0
    lines = capsys.readouterr().out.splitlines()
    ph, se = (float(v) for v in lines[0].split("=")[1].split()[:3:2])
    mc, mc_se = (float(v) for v in lines[2].split("=")[1].split()[:3:2])
    assert abs(ph - mc) < 3 * (se**2 + mc_se**2) ** 0.5


def test_price_two_rate_ordered(tmp_path, capsys):
    assert run("price", "--config", write(tmp_path), "--out", tmp_path) == 0
    assert "interval ordered: true" in capsys.readouterr().out


def test_price_reports_ill_conditioned_step(tmp_path, capsys):
    path = write(tmp_path, extra="").read_text().replace("basis_degree = 3", "basis_degree = 12")
    (tmp_path / "ill.toml").write_text(path)
    assert run("price", "--config", tmp_path / "ill.toml", "--out", tmp_path) == 1
    assert "at step" in capsys.readouterr().err


def test_bounds_nonempty(tmp_path, capsys):
    assert run("bounds", "--config", write(tmp_path), "--out", tmp_path) == 0
    assert "nonempty: true" in capsys.readouterr().out
    assert (tmp_path / "bounds.csv").read_text().splitlines()[1].split(",")[5] == "true"


def test_compare_zero_violations(tmp_path, capsys):
    extra = "[compare]\ngenerator_offset = 0.01\nterminal_gap = 0.2\n"
    path = tmp_path / "cmp.toml"
    path.write_text(BASE.format(rate_b=0.03, rate_ib=0.02, extra="") + CALL + extra)
    assert run("compare", "--config", path, "--out", tmp_path) == 0
    assert "violations: 0 of" in capsys.readouterr().out
    path.write_text(BASE.format(rate_b=0.03, rate_ib=0.02, extra="") + CALL + "[compare]\ndriver_drift = -1.0\n")
    assert run("compare", "--config", path, "--out", tmp_path) == 2


def test_strategy_export(tmp_path, capsys):
    assert run("strategy", "--config", write(tmp_path, extra="export_paths = 3"), "--out", tmp_path) == 0
    assert "strategy invariants: ok" in capsys.readouterr().out
    rows = (tmp_path / "strategy.csv").read_text().splitlines()
    assert rows[0] == "t,path,xi_1,psi_l,psi_b,psi_1_b,eta_b,eta_l"
    assert len(rows) == 1 + 3 * 10


def test_selftest_passes(capsys):
    assert run("selftest") == 0
    assert "FAIL" not in capsys.readouterr().out


def test_price_csv_is_byte_identical(tmp_path, monkeypatch):
    cfg = write(tmp_path)
    outputs = []
    for threads in ("1", "1", "3"):
        out = tmp_path / f"run{len(outputs)}"
        monkeypatch.setenv(THREADS_ENV, threads)
        assert run("price", "--config", cfg, "--out", out) == 0
        outputs.append((out / "prices.csv").read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]
    assert run("price", "--config", cfg, "--out", tmp_path / "other", "--seed", 4) == 0
    assert (tmp_path / "other" / "prices.csv").read_bytes() != outputs[0]


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "bsdefund", "validate", "--config", str(write(tmp_path))],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "[PASS] ellipticity" in proc.stdout


def test_sample_configs_validate():
    root = Path(__file__).resolve().parents[1] / "configs"
    for path in sorted(root.glob("*.toml")):
        assert run("validate", "--config", path) == 0
