import json

import pytest

from parahom import cli
from parahom.config import Config

CONSTANT = """
[experiment]
kind = effective
seed = 3

[operator]
kind = scalar_modulated
base = linear_trace

[environment]
kind = constant
d = 1
value = 3/2

[effective]
M_list = 1; -1
tol = 0.002
methods = corrector_zero
expect = exact
expect_rtol = 0.01
"""


def _write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_run_constant_effective(tmp_path, capsys):
    p = _write(tmp_path, CONSTANT)
    assert cli.main(["run", "--config", str(p), "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "c.json").read_text())
    assert doc["passed"] and doc["kind"] == "effective" and doc["seed"] == 3
    assert (tmp_path / "c.csv").read_text().count("\n") >= 3
    # bare --config means run
    assert cli.main(["--config", str(p), "--out", str(tmp_path / "b")]) == 0


def test_cfl_violation_exit_1(tmp_path, capsys):
    p = _write(tmp_path, "[experiment]\nkind = solve\n[operator]\nkind = linear_trace\n"
                         "[grid]\nh = 1/32\ndt = 1/100\n[solve]\nr = 1\neps = 0\n")
    assert cli.main(["run", "--config", str(p), "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "grid.dt" in err


@pytest.mark.parametrize("body,key", [
    ("[experiment]\nkind = nonsense\n", "experiment.kind"),
    ("[experiment]\nkind = solve\nseed = -4\n[operator]\nkind = linear_trace\n", "seed"),
    ("[experiment]\nkind = solve\n[operator]\nkind = linear_trace\nlambda = x\n", "operator.lambda"),
])
def test_bad_keys_exit_1(tmp_path, capsys, body, key):
    p = _write(tmp_path, body)
    assert cli.main(["run", "--config", str(p), "--out", str(tmp_path)]) == 1
    assert key in capsys.readouterr().err


def test_usage_errors(capsys):
    assert cli.main([]) == 1
    assert cli.main(["run"]) == 1
    assert cli.main(["run", "--config", "/nonexistent.ini"]) == 1


def test_negative_control_exit_2(tmp_path):
    cfgs = {p.name: p for p in cli.shipped_configs("negative")}
    p = cfgs["negative_moments_reverse.ini"]
    assert cli.main(["run", "--config", str(p), "--out", str(tmp_path)]) == 2


def test_shipped_cfl_negative_control(tmp_path, capsys):
    p = {p.name: p for p in cli.shipped_configs("negative")}["negative_cfl_dt.ini"]
    assert cli.main(["run", "--config", str(p), "--out", str(tmp_path)]) == 1
    assert "dt" in capsys.readouterr().err


def test_determinism_bytes(tmp_path):
    cfg = Config.from_string(CONSTANT)
    a = cli.execute(cfg, 11, 1)[1:]
    b = cli.execute(cfg, 11, 1)[1:]
    c = cli.execute(cfg, 11, 4)[1:]
    assert a == b == c
    d = cli.execute(cfg, 12, 1)[2]
    assert d != a[1]


def test_shipped_configs_natural_order():
    names = [p.name for p in cli.shipped_configs("acc")]
    assert names[:3] == ["acc1_d1.ini", "acc1_d2.ini", "acc2.ini"]
    assert names[-2:] == ["acc10.ini", "acc11.ini"]
