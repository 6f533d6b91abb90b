import numpy as np
import pytest

from merton2d.cli import (ConfigError, RunConfig, main, parse_config,
                          run_command, serialize_config)
from merton2d.model import PayoffKind
from merton2d.stepping import Method

MINIMAL = """
# minimal pricing job
preset = set1
method = mcs2_it
kappa = 2
command = price
"""


def test_parse_minimal_config_fills_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.command == "price"
    assert cfg.preset == "set1"
    assert cfg.method is Method.MCS2_IT
    assert cfg.kappa == 2
    assert cfg.payoff is PayoffKind.PUT_ON_MIN
    assert cfg.penalty_tol == 1e-7
    assert cfg.penalty_large == 1e7
    assert cfg.s_max_mult == 8.0
    assert cfg.interior_width == 0.40
    params, option = cfg.model_and_option()
    assert option.strike == 100.0
    # contract defaults used downstream: d = K/3, window 0.8K..1.2K
    from merton2d.grid import default_spec
    spec = default_spec(option.strike, nu=3)
    assert spec.d == pytest.approx(option.strike / 3)
    assert spec.s_left == pytest.approx(0.8 * option.strike)
    assert spec.s_right == pytest.approx(1.2 * option.strike)


def test_parse_unknown_method_names_options():
    with pytest.raises(ConfigError) as err:
        parse_config("command = price\nmethod = supersolver\n")
    msg = str(err.value)
    assert "method" in msg
    assert "mcs2_it" in msg and "cnfi_p" in msg


def test_parse_unknown_key_and_duplicates():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("commnad = price\n")
    with pytest.raises(ConfigError, match="duplicate key"):
        parse_config("kappa = 1\nkappa = 2\n")
    with pytest.raises(ConfigError, match="expected 'key = value'"):
        parse_config("price\n")


def test_parse_explicit_model_requires_all_keys():
    with pytest.raises(ConfigError, match="delta2"):
        parse_config("preset = none\nr = 0.05\nsigma1 = 0.2\nsigma2 = 0.2\n"
                     "rho = 0.1\nlam = 1.0\ngamma1 = 0\ngamma2 = 0\n"
                     "rho_hat = 0\ndelta1 = 0.1\nstrike = 100\nmaturity = 1\n")
    cfg = parse_config("preset = none\nr = 0.05\nsigma1 = 0.2\nsigma2 = 0.2\n"
                       "rho = 0.1\nlam = 1.0\ngamma1 = 0\ngamma2 = 0\n"
                       "rho_hat = 0\ndelta1 = 0.1\ndelta2 = 0.1\n"
                       "strike = 100\nmaturity = 1\n")
    params, option = cfg.model_and_option()
    assert params.lam == 1.0
    assert cfg.set_label == "custom"


def test_parse_converge_requires_m_list():
    with pytest.raises(ConfigError, match="m_list"):
        parse_config("command = converge\npreset = set1\n")


def test_roundtrip_idempotent():
    text = ("command = converge\npreset = set2\npayoff = put_on_average\n"
            "method = cnab_it\nkappa = 1\nm_list = 10,20\nroi = large\n"
            "spots = 36:36,40:44\nreference = mcs2_it\njobs = 2\n")
    cfg = parse_config(text)
    cfg2 = parse_config(serialize_config(cfg))
    assert cfg == cfg2
    assert serialize_config(cfg) == serialize_config(cfg2)


def test_price_command_writes_rows(tmp_path):
    text = ("command = price\npreset = set1\nmethod = mcs2_it\nkappa = 2\n"
            "m = 16\nn_steps = 8\nspots = 100:100,90:110\n"
            f"out = {tmp_path}/res\n")
    cfg = parse_config(text)
    assert run_command(cfg) == 0
    lines = (tmp_path / "res" / "prices.csv").read_text().strip().split("\n")
    assert lines[0] == "set,payoff,s1,s2,value"
    assert len(lines) == 3
    assert lines[1].startswith("set1,put_on_min,100,100,")
    value = float(lines[1].split(",")[-1])
    assert 5.0 < value < 15.0


def test_cli_outputs_byte_identical(tmp_path):
    text = ("command = price\npreset = set2\nmethod = cnab_it\nkappa = 2\n"
            "m = 14\nn_steps = 8\n")
    for sub in ("a", "b"):
        cfg = parse_config(text + f"out = {tmp_path}/{sub}\n")
        assert run_command(cfg) == 0
    assert (tmp_path / "a" / "prices.csv").read_bytes() == \
        (tmp_path / "b" / "prices.csv").read_bytes()


def test_converge_command_writes_errors_and_orders(tmp_path):
    text = ("command = converge\npreset = set3\nmethod = mcs2_it\nkappa = 2\n"
            "m_list = 8,12,16\nroi = large\nreference = mcs2_it\n"
            f"out = {tmp_path}/conv\n")
    cfg = parse_config(text)
    assert run_command(cfg) == 0
    err_lines = (tmp_path / "conv" / "errors.csv").read_text().strip().split("\n")
    assert err_lines[0] == "method,kappa,m,N,Nprime,roi,error"
    assert len(err_lines) == 4
    ms = [int(l.split(",")[2]) for l in err_lines[1:]]
    assert ms == sorted(ms)
    for line in err_lines[1:]:
        parts = line.split(",")
        assert parts[0] == "mcs2_it"
        assert int(parts[4]) == 2 * int(parts[3])
    order_lines = (tmp_path / "conv" / "orders.csv").read_text().strip().split("\n")
    assert order_lines[0] == "method,kappa,set,payoff,roi,order"
    assert order_lines[1].startswith("mcs2_it,2,set3,put_on_min,large,")


def test_converge_jobs_parallel_matches_serial(tmp_path):
    base = ("command = converge\npreset = set1\nmethod = cnab_it\nkappa = 2\n"
            "m_list = 8,12\nroi = large\nreference = mcs2_it\n")
    cfg1 = parse_config(base + f"out = {tmp_path}/serial\njobs = 1\n")
    assert run_command(cfg1) == 0
    cfg2 = parse_config(base + f"out = {tmp_path}/par\njobs = 2\n")
    assert run_command(cfg2) == 0
    serial = (tmp_path / "serial" / "errors.csv").read_text()
    par = (tmp_path / "par" / "errors.csv").read_text()
    assert serial == par


def test_eer_command_writes_full_mask(tmp_path):
    text = ("command = eer\npreset = set1\nm = 16\nn_steps = 10\n"
            f"out = {tmp_path}/eer\n")
    cfg = parse_config(text)
    assert run_command(cfg) == 0
    lines = (tmp_path / "eer" / "eer.csv").read_text().strip().split("\n")
    assert lines[0] == "set,payoff,i,j,s1,s2,exercised"
    from merton2d.grid import build_axis, default_spec, nu_for_target_m
    nu = nu_for_target_m(default_spec(100.0, 1), 16)
    m = build_axis(default_spec(100.0, nu)).m
    assert len(lines) == 1 + (m + 1) ** 2
    flags = {line.split(",")[-1] for line in lines[1:]}
    assert flags == {"0", "1"}


def test_diagnose_command(tmp_path):
    text = f"command = diagnose\npreset = set2\nm = 12\nout = {tmp_path}/diag\n"
    assert run_command(parse_config(text)) == 0
    grid_lines = (tmp_path / "diag" / "grid.csv").read_text().strip().split("\n")
    assert grid_lines[0] == "q,j,s"
    diag = dict(line.split(",") for line in
                (tmp_path / "diag" / "jumpdiag.csv").read_text().strip().split("\n")[1:])
    assert float(diag["kernel_mass"]) == pytest.approx(1.0, abs=1e-3)
    assert float(diag["norm_bound"]) <= 2.0 + 1e-3
    assert float(diag["lam"]) == 2.0


def test_table_command_rounds_three_decimals(tmp_path):
    text = (f"command = table\npreset = set2\ninterior_width = 2.0\n"
            f"dt = 0.05\nout = {tmp_path}/tab\n")
    assert run_command(parse_config(text)) == 0
    lines = (tmp_path / "tab" / "table.csv").read_text().strip().split("\n")
    assert lines[0] == "set,payoff,s1,s2,value"
    assert len(lines) == 10
    for line in lines[1:]:
        value = line.split(",")[-1]
        assert len(value.split(".")[1]) == 3


def test_main_exit_codes(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("method = nope\n")
    assert main(["--config", str(bad)]) == 1
    assert main(["--config", str(tmp_path / "missing.cfg")]) == 1

    good = tmp_path / "good.cfg"
    good.write_text("command = diagnose\npreset = set1\nm = 10\n")
    assert main(["--config", str(good), "--out", str(tmp_path / "o")]) == 0

    # numerical failure: a penalty tolerance below roundoff never converges
    fail = tmp_path / "fail.cfg"
    fail.write_text("command = price\npreset = set1\nmethod = cnfi_p\n"
                    "m = 10\nn_steps = 6\npenalty_tol = 1e-30\n")
    assert main(["--config", str(fail), "--out", str(tmp_path / "f")]) == 2


def test_main_flag_overrides(tmp_path, capsys):
    cfgfile = tmp_path / "c.cfg"
    cfgfile.write_text("command = diagnose\npreset = set1\nm = 10\nout = ignored\n")
    assert main(["--config", str(cfgfile), "--out", str(tmp_path / "flagged"),
                 "--verbose"]) == 0
    assert (tmp_path / "flagged" / "grid.csv").exists()
    out = capsys.readouterr().out
    assert "wrote" in out


def test_invalid_roi_value(tmp_path):
    text = ("command = converge\npreset = set1\nm_list = 8\nroi = medium\n"
            f"out = {tmp_path}/x\n")
    with pytest.raises(ConfigError, match="roi"):
        run_command(parse_config(text))
