import pytest

from pilothop.cli import main
from pilothop.config import (
    SpecParseError,
    SystemConfig,
    build_system,
    parse_model,
    parse_spec,
    validate,
)
from pilothop.channels import LogNormalShadowing, RingPathLoss, UniformPowerError
from pilothop.experiments import CSV_HEADER, Record, format_csv, point_seed, run_experiment


def test_parse_model_defaults_and_tags():
    assert parse_model(None) == UniformPowerError(10.0, 0.0)
    assert parse_model({"type": "lognormal", "sigma_v2": 0.5}) == LogNormalShadowing(10.0, 0.5)
    assert parse_model({"type": "pathloss", "alpha": 0.25}) == RingPathLoss(10.0, 0.25)
    with pytest.raises(ValueError):
        parse_model({"type": "rayleigh"})
    with pytest.raises(ValueError):
        parse_model({"type": "uniform", "beta": 3})


def test_build_system_defaults():
    cfg, diags = build_system({"M": 100})
    assert diags == []
    assert cfg.K == 800 and cfg.model.delta_bar == 10.0


def test_build_system_diagnostics_name_fields():
    cfg, diags = build_system({"M": 100, "tau_u": 50, "tau_p": 70})
    assert cfg is None
    assert any(d.field == "system.tau_p" and "tau_u" in d.message for d in diags)
    cfg, diags = build_system({"M": 100, "p_a": 1.5})
    assert any(d.field == "system.p_a" for d in diags)
    cfg, diags = build_system({"K": 800})
    assert any(d.field == "system.M" for d in diags)


def test_system_config_invariants():
    with pytest.raises(ValueError):
        SystemConfig(M=1)
    with pytest.raises(ValueError):
        SystemConfig(M=100, tau_u=50, tau_p=51)
    with pytest.raises(ValueError):
        SystemConfig(M=100, p_a=-0.1)


def test_parse_spec_reports_line_and_column(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("kind: sweep\nmethods: [R1-opt\n")
    with pytest.raises(SpecParseError) as err:
        parse_spec(bad)
    assert err.value.line is not None and err.value.column is not None


def test_parse_spec_rejects_unknown_keys():
    with pytest.raises(SpecParseError):
        parse_spec("kind: sweep\nbogus: 1\n")
    with pytest.raises(SpecParseError):
        parse_spec("methods: [Rh0]\n")


def test_validate_catches_problems():
    spec = parse_spec("kind: sweep\nsystem: {M: 100}\nmethods: [Rh0]\nsweep: {axis: tau_u, values: []}\n")
    diags = validate(spec)
    assert any(d.field == "sweep.values" for d in diags)
    spec = parse_spec("kind: optimize\nsystem: {M: 100}\nmethods: [R9]\n")
    assert any(d.field == "methods" for d in validate(spec))
    spec = parse_spec("kind: optimize\nsystem: {M: 100, K: 800}\nmethods: [Rh0]\n")
    assert validate(spec) == []


def test_point_seed_is_stable():
    assert point_seed(42, 0) == point_seed(42, 0)
    assert point_seed(42, 0) != point_seed(42, 1)


def test_format_csv_nine_significant_digits():
    rec = Record(60, "Rh0", 1.2345678949, 20, 29.1548152064, 0.00123456789)
    text = format_csv([rec])
    lines = text.strip().split("\n")
    assert lines[0] == CSV_HEADER
    assert lines[1] == "60,Rh0,1.23456789,20,29.1548152,0.00123456789"


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_cli_validate_ok(tmp_path, capsys):
    spec = _write(tmp_path, "ok.yaml", "kind: optimize\nsystem: {M: 100}\nmethods: [Rh0]\n")
    assert main(["validate", spec]) == 0
    assert "OK" in capsys.readouterr().out


def test_cli_parse_error_exit_2(tmp_path, capsys):
    spec = _write(tmp_path, "bad.yaml", "kind: [unclosed\n")
    assert main(["validate", spec]) == 2
    assert main(["run", spec]) == 2
    assert "parse error" in capsys.readouterr().err


def test_cli_missing_file_exit_2(tmp_path):
    assert main(["run", str(tmp_path / "absent.yaml")]) == 2


def test_cli_invalid_spec_exit_3(tmp_path, capsys):
    spec = _write(
        tmp_path, "inv.yaml",
        "kind: sweep\nsystem: {M: 100}\nmethods: [Rh0]\nsweep: {axis: tau_u, values: []}\n",
    )
    assert main(["run", spec]) == 3
    assert "sweep.values" in capsys.readouterr().err


def test_cli_numeric_failure_exit_4(tmp_path, capsys):
    # validates cleanly but the averaged-count bound needs p_a*K >= 1
    spec = _write(
        tmp_path, "num.yaml",
        "kind: bound-eval\nsystem: {M: 100, K: 800, tau_u: 100, tau_p: 33, p_a: 0.0001}\nbounds: [R3]\n",
    )
    assert main(["run", spec, "--out", str(tmp_path)]) == 4
    assert "numeric failure" in capsys.readouterr().err


def test_cli_run_bound_eval(tmp_path, capsys):
    spec = _write(
        tmp_path, "be.yaml",
        "kind: bound-eval\nsystem: {M: 100, K: 800, tau_u: 100, tau_p: 33, p_a: 0.0375}\n"
        "bounds: [R1, R2, R3, Ra]\nout_prefix: be\n",
    )
    assert main(["run", spec, "--out", str(tmp_path / "out")]) == 0
    csv = (tmp_path / "out" / "be_bounds.csv").read_text()
    lines = csv.strip().split("\n")
    assert lines[0] == CSV_HEADER
    assert len(lines) == 5
    rates = {ln.split(",")[1]: float(ln.split(",")[2]) for ln in lines[1:]}
    assert rates["R2"] <= rates["R1"] + 1e-9
    assert rates["R3"] <= rates["R1"] + 1e-9
    assert all(v >= 0 for v in rates.values())


def test_cli_seed_override_changes_output(tmp_path):
    text = (
        "kind: bound-eval\nsystem: {M: 100, K: 800, tau_u: 100, tau_p: 33, p_a: 0.0375,\n"
        "  model: {type: uniform, alpha: 0.5}}\nbounds: [R1]\nout_prefix: sd\n"
    )
    spec = _write(tmp_path, "sd.yaml", text)
    assert main(["run", spec, "--out", str(tmp_path / "a"), "--seed", "1"]) == 0
    assert main(["run", spec, "--out", str(tmp_path / "b"), "--seed", "2"]) == 0
    assert main(["run", spec, "--out", str(tmp_path / "c"), "--seed", "1"]) == 0
    a = (tmp_path / "a" / "sd_bounds.csv").read_text()
    b = (tmp_path / "b" / "sd_bounds.csv").read_text()
    c = (tmp_path / "c" / "sd_bounds.csv").read_text()
    assert a != b
    assert a == c


def test_cli_sweep_parallelism_byte_identical(tmp_path):
    text = (
        "kind: sweep\nsystem: {M: 60, K: 200, tau_u: 40, seed: 5,\n"
        "  model: {type: uniform, alpha: 0.25}, mc: {n_beta_samples: 200}}\n"
        "methods: [Ra-opt, Rh0]\nsweep: {axis: tau_u, values: [30, 40, 50]}\n"
        "evaluate_with: R1\nout_prefix: sw\n"
    )
    spec = _write(tmp_path, "sw.yaml", text)
    assert main(["run", spec, "--out", str(tmp_path / "j1"), "--jobs", "1"]) == 0
    assert main(["run", spec, "--out", str(tmp_path / "j2"), "--jobs", "2"]) == 0
    for suffix in ("rate", "tau_p_opt", "p_aK_opt"):
        f1 = (tmp_path / "j1" / f"sw_{suffix}.csv").read_bytes()
        f2 = (tmp_path / "j2" / f"sw_{suffix}.csv").read_bytes()
        assert f1 == f2
    body = (tmp_path / "j1" / "sw_rate.csv").read_text().strip().split("\n")
    assert body[0] == CSV_HEADER
    assert len(body) == 1 + 3 * 2
    for ln in body[1:]:
        parts = ln.split(",")
        assert float(parts[2]) >= 0.0
        assert 1 <= int(parts[3]) <= int(parts[0])


def test_cli_simulate_and_compare(tmp_path):
    sim = _write(
        tmp_path, "sim.yaml",
        "kind: simulate\nsystem: {M: 64, K: 60, tau_u: 60, tau_p: 12, p_a: 0.1, seed: 3}\n"
        "n_slots: 60\nn_frames: 2\nout_prefix: sim\n",
    )
    assert main(["run", sim, "--out", str(tmp_path / "sim")]) == 0
    lines = (tmp_path / "sim" / "sim_simulate.csv").read_text().strip().split("\n")
    assert len(lines) == 1 + 2 + 1  # two frames plus the aggregate row

    cmp_spec = _write(
        tmp_path, "cmp.yaml",
        "kind: compare\nsystem: {M: 64, K: 60, tau_u: 60, seed: 3, mc: {n_beta_samples: 200}}\n"
        "methods: [Rh0]\nn_slots: 150\nn_frames: 4\nout_prefix: cmp\n",
    )
    assert main(["run", cmp_spec, "--out", str(tmp_path / "cmp")]) == 0
    lines = (tmp_path / "cmp" / "cmp_compare.csv").read_text().strip().split("\n")
    rows = {ln.split(",")[1]: ln.split(",") for ln in lines[1:]}
    bound = float(rows["Rh0"][2])
    sim_mean = float(rows["Rh0-sim"][2])
    sim_err = float(rows["Rh0-sim"][5])
    # the simulated rate sits at or above the lower bound
    assert sim_mean >= bound - max(3 * sim_err, 0.15 * bound)


def test_run_experiment_unknown_kind():
    from pilothop.config import ExperimentSpec

    with pytest.raises(ValueError):
        run_experiment(ExperimentSpec(kind="mystery", system={"M": 100}))
