import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bosonic2t.channels import lifetimes_to_rates
from bosonic2t.harness import cli
from bosonic2t.harness.config import (ConfigError, ExperimentConfig, code_label, config_hash,
                                      default_alpha_grid, load_config, parse_code, parse_config,
                                      parse_grid)
from bosonic2t.harness.output import fmt, write_csv
from bosonic2t.harness.sweeps import (clear_cache, combined_surface, cycle_time_bound,
                                      evaluate_loss, fit_power_law, line_fidelity,
                                      qubit_equivalent, relative_infidelity, sweep_gamma)


# ----------------------------------------------------------------- grids

def test_grid_spellings():
    assert parse_grid("0.5:1.5:0.25") == (0.5, 0.75, 1.0, 1.25, 1.5)
    assert parse_grid("1e-3, 1e-2 0.1") == (1e-3, 1e-2, 0.1)
    g = parse_grid("log:1e-3:1e-1:3")
    assert g == pytest.approx((1e-3, 1e-2, 1e-1))
    assert parse_grid("2.0") == (2.0,)


@pytest.mark.parametrize("bad", ["", "1, 1", "2, 1", "log:0:1:3", "1:2", "1:0:0.5", "log:1:2"])
def test_bad_grids_rejected(bad):
    with pytest.raises(ValueError):
        parse_grid(bad)


@given(st.floats(0.1, 5), st.floats(0.01, 1), st.integers(1, 30))
@settings(max_examples=50, deadline=None)
def test_range_grid_is_inclusive_and_increasing(start, step, n):
    stop = start + step * (n - 1)
    g = parse_grid(f"{start!r}:{stop!r}:{step!r}")
    assert len(g) == n
    assert all(b > a for a, b in zip(g, g[1:]))


def test_default_alpha_grids():
    g = default_alpha_grid("2T-quoctit")
    assert g[0] == 0.5 and g[-1] == 4.0 and len(g) == 15
    assert default_alpha_grid("[8,16]-PSK")[-1] == 12.0


# ------------------------------------------------------------------ codes

@pytest.mark.parametrize("text,norm", [
    ("2T-qutrit", "2T-qutrit"), ("quoctit", "2T-quoctit"), ("[8,16]-PSK", "psk:8,2"),
    ("8,24", "psk:8,3"), ("psk:3, 2", "psk:3,2"), ("random", "random:8"), ("random:3", "random:3"),
])
def test_parse_code(text, norm):
    assert parse_code(text) == norm


@pytest.mark.parametrize("bad", ["[8,12]-PSK", "2T-qubit", "psk"])
def test_parse_code_rejects(bad):
    with pytest.raises(ValueError):
        parse_code(bad)


def test_code_label_roundtrip():
    assert code_label("psk:3,3") == "[3,9]-PSK"
    assert parse_code(code_label("psk:3,3")) == "psk:3,3"


# ----------------------------------------------------------------- config

CONFIG = """\
[experiment]
code = 2T-qutrit
seed = 4
steps = sweep-gamma, fit

[grids]
alpha = 1.0:2.0:0.5
gamma = log:1e-3:1e-1:3

[truncation]
n = 12

[solver]
rel_gap = 1e-4
"""


def test_parse_config():
    cfg = parse_config(CONFIG)
    assert cfg.code == "2T-qutrit" and cfg.seed == 4
    assert cfg.alphas == (1.0, 1.5, 2.0)
    assert cfg.gammas == pytest.approx((1e-3, 1e-2, 1e-1))
    assert cfg.trunc_N == 12 and cfg.truncation() == 12
    assert cfg.solver.rel_gap == 1e-4
    assert cfg.steps == ("sweep-gamma", "fit")


def test_config_truncation_defaults():
    assert ExperimentConfig().truncation() == 16
    assert ExperimentConfig(code="[3,6]-PSK").truncation() == 40


@pytest.mark.parametrize("text,line", [
    ("[experiment]\ncode = 2T-qutrit\nbogus = 1\n", 3),
    ("[grids]\n\nalpha = 2, 1\n", 3),
    ("[experiment]\nseed = x\n", 2),
    ("[experiment]\ncode = 2T-qutrit\n[truncation]\nnorm_floor = 0.7\nn = abc\n", 5),
])
def test_config_errors_carry_line_numbers(text, line):
    with pytest.raises(ConfigError) as exc:
        parse_config(text, "exp.ini")
    assert exc.value.line == line
    assert f"exp.ini:{line}:" in str(exc.value)


def test_config_semantic_errors():
    with pytest.raises(ConfigError):
        parse_config("[experiment]\ncode = 2T-qubit\n")
    with pytest.raises(ConfigError):
        parse_config("[combined]\ntarget = 1.5\n")
    with pytest.raises(ConfigError):
        parse_config("[comparison]\nalpha_cap = -1\n")
    with pytest.raises(ConfigError):
        load_config("/nonexistent/exp.ini")


def test_overrides_win(tmp_path):
    p = tmp_path / "exp.ini"
    p.write_text(CONFIG)
    cfg = load_config(p, {"seed": 9, "alphas": (1.5,)})
    assert cfg.seed == 9 and cfg.alphas == (1.5,)
    assert config_hash(cfg) != config_hash(load_config(p))
    assert config_hash(cfg) == config_hash(load_config(p, {"seed": 9, "alphas": (1.5,)}))


def test_alpha_cap():
    cfg = ExperimentConfig(alpha_cap=2.0)
    assert max(cfg.alpha_grid("2T-quoctit")) == 2.0
    assert max(cfg.alpha_grid("2T-quoctit", capped=False)) == 4.0
    with pytest.raises(ValueError):
        ExperimentConfig(alpha_cap=0.1).alpha_grid("2T-quoctit")


# -------------------------------------------------------------- analysis

@given(st.floats(0.01, 10), st.floats(0.5, 2.5))
@settings(max_examples=30, deadline=None)
def test_power_law_fit_recovers_exact_law(a, b):
    x = np.array([3e-3, 1e-2, 3e-2, 1e-1])
    fr = fit_power_law(x, a * x ** b)
    assert fr.a == pytest.approx(a, rel=1e-9)
    assert fr.b == pytest.approx(b, rel=1e-9)
    assert fr.residual < 1e-9


def test_power_law_fit_needs_three_points():
    with pytest.raises(ValueError):
        fit_power_law([1e-2, 1e-1, 1e-3], [1e-3, 0.0, -1.0])


def test_relative_infidelity_and_qubit_equivalent():
    assert relative_infidelity(0.99, 0.99) == pytest.approx(0.01 / (1 - 0.99 ** (math.log(8) / math.log(3))))
    assert math.isnan(relative_infidelity(0.9, 1.0))
    with pytest.raises(ValueError):
        relative_infidelity(0.0, 0.5)
    assert qubit_equivalent(0.729, 8) == pytest.approx(0.9)


def test_combined_surface_product_and_argmax():
    gam, dl, al = (1e-3, 1e-2), (1e-3, 1e-2, 1e-1), (1.0, 2.0)
    lf = np.array([[0.99, 0.995], [0.9, 0.95]])
    df = np.array([[0.999, 0.99], [0.99, 0.9], [0.9, 0.5]])
    s = combined_surface(gam, dl, al, lf, df)
    brute = np.max(lf[:, None, :] * df[None, :, :], axis=2)
    assert np.allclose(s.F, brute)
    assert s.alpha_opt[0, 2] == 1.0 and s.alpha_opt[1, 0] == 2.0
    with pytest.raises(ValueError):
        combined_surface(gam, dl, (1.0,), lf, df)


def test_cycle_time_bound_on_analytic_surface():
    t1, tphi = 15.6e-3, 43.2e-3
    gam = tuple(np.geomspace(1e-4, 1e-1, 7))
    dl = tuple(np.geomspace(1e-4, 1e-1, 7))
    # 1 - F_loss = 2 gamma exactly (log-log linear), no dephasing error
    lf = np.array([[1 - 2 * g] for g in gam])
    df = np.ones((len(dl), 1))
    s = combined_surface(gam, dl, (1.0,), lf, df)
    out = cycle_time_bound(s, t1, tphi, 0.9)
    assert out["T"] == pytest.approx(-t1 * math.log(1 - 0.05), rel=1e-8)
    assert out["inside_grid"]
    g, d = lifetimes_to_rates(out["T"], t1, tphi)
    assert line_fidelity(s, out["T"], t1, tphi) == pytest.approx(0.9, abs=1e-9)
    assert (g, d) == pytest.approx((out["gamma"], out["delta"]))


def test_failed_points_are_recorded():
    row = evaluate_loss("random:30", 1.0, 0.05)
    assert row["status"].startswith("error") and math.isnan(row["F"])


def test_sweep_minimizes_over_alpha():
    clear_cache()
    cfg = ExperimentConfig(code="2T-qutrit", alphas=(1.0, 1.5), gammas=(0.0, 0.05))
    rows = sweep_gamma(cfg)
    assert rows[0]["min_infidelity"] == 0.0
    direct = [1 - evaluate_loss("2T-qutrit", a, 0.05, settings=cfg.solver)["F"] for a in (1.0, 1.5)]
    assert rows[1]["min_infidelity"] == pytest.approx(min(direct), abs=1e-12)
    assert rows[1]["alpha_opt"] == (1.0, 1.5)[int(np.argmin(direct))]


# ----------------------------------------------------------------- output

def test_fmt_is_stable():
    assert fmt(0.1 + 0.2) == "0.3"
    assert fmt(float("nan")) == "nan"
    assert fmt(np.int64(3)) == "3" and fmt(True) == "1" and fmt(None) == ""


def test_csv_writer(tmp_path):
    p = write_csv(tmp_path / "a" / "t.csv", ["x", "y"], [{"x": 1, "y": 0.5}, (2, None)])
    assert p.read_bytes() == b"x,y\n1,0.5\n2,\n"


# -------------------------------------------------------------------- CLI

def _run(args):
    clear_cache()
    return cli.main(args)


def test_cli_artifacts(tmp_path, capsys):
    for sub in ("constellation", "gram", "encode"):
        out = tmp_path / sub
        assert _run([sub, "--alpha", "1.5", "--out", str(out), "--code", "2T-quoctit"]) == 0
        man = json.loads((out / "manifest.json").read_text())
        assert man["command"] == sub and man["files"]
    assert len((tmp_path / "constellation" / "constellation.csv").read_text().splitlines()) == 25
    enc = json.loads((tmp_path / "encode" / "encoding.json").read_text())
    assert enc["logical_dim"] == 8 and enc["orthonormality_error"] < 1e-9


def test_cli_reports_config_errors(tmp_path, capsys):
    p = tmp_path / "bad.ini"
    p.write_text("[experiment]\ncode = 2T-qutrit\nwidgets = 3\n")
    assert _run(["sweep-gamma", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "bad.ini:3:" in err and "widgets" in err
    assert _run(["sweep-gamma", "--code", "nonsense", "--out", str(tmp_path / "o")]) == 2


def test_cli_sweep_is_byte_identical(tmp_path):
    args = ["sweep-alpha", "--code", "2T-qutrit", "--alpha", "1.0,1.5", "--gamma", "0.05", "--seed", "3"]
    hashes = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert _run(args + ["--out", str(out)]) == 0
        files = sorted(p for p in out.iterdir() if p.suffix in (".csv", ".json", ".svg"))
        hashes.append({p.name: p.read_bytes() for p in files})
    assert hashes[0] == hashes[1]
    assert "sweep_alpha.csv" in hashes[0]


def test_cli_workers_do_not_change_results(tmp_path):
    base = ["sweep-gamma", "--code", "2T-qutrit", "--alpha", "1.0,1.5", "--gamma", "0.01,0.05"]
    assert _run(base + ["--out", str(tmp_path / "w1")]) == 0
    assert _run(base + ["--workers", "2", "--out", str(tmp_path / "w2")]) == 0
    assert (tmp_path / "w1" / "sweep_gamma.csv").read_bytes() == (tmp_path / "w2" / "sweep_gamma.csv").read_bytes()


def test_cli_run_steps_from_config(tmp_path):
    p = tmp_path / "exp.ini"
    p.write_text(CONFIG.replace("steps = sweep-gamma, fit", "steps = encode, gram"))
    assert _run(["run", "--config", str(p), "--out", str(tmp_path / "r")]) == 0
    assert (tmp_path / "r" / "encode" / "codewords.csv").exists()
    assert (tmp_path / "r" / "gram" / "gram.csv").exists()
    p.write_text(CONFIG.replace("steps = sweep-gamma, fit", "steps = encode, dance"))
    assert _run(["run", "--config", str(p), "--out", str(tmp_path / "r2")]) == 2
