import csv
import json
import math

import numpy as np
import pytest

from ncphase.cli import EXIT_FAILED, EXIT_OK, EXIT_USAGE, figure_config, main

PERTURBED_TABLE = {
    "basis": ["x_k", "x_l", "x_gamma", "p_k", "p_l", "p_gamma"],
    "mode": "exact",
    "brackets": [
        {"pair": ["x_k", "x_l"], "coords": {"x_k": "1"}},
        {"pair": ["x_k", "p_k"], "const": "1"},
        {"pair": ["x_l", "p_l"], "const": "1"},
        {"pair": ["x_gamma", "p_gamma"], "const": "1"},
    ],
}


def write_json(path, data):
    path.write_text(json.dumps(data))
    return str(path)


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


# --- verify / derive ---------------------------------------------------------


def test_verify_type1_passes(capsys):
    assert main(["verify", "--space", "type1", "--kappa", "410", "--kappa-tilde", "10"]) == EXIT_OK
    assert capsys.readouterr().out.startswith("PASS type1: max |jacobi residual| = 0")


def test_verify_commutative_passes(capsys):
    assert main(["verify", "--space", "commutative"]) == EXIT_OK
    assert "PASS" in capsys.readouterr().out


def test_verify_perturbed_table_fails(tmp_path, capsys):
    path = write_json(tmp_path / "custom.json", PERTURBED_TABLE)
    assert main(["verify", "--table", path]) == EXIT_FAILED
    out = capsys.readouterr().out
    assert out.startswith("FAIL") and "= 1" in out.splitlines()[0]
    assert "(x_k, x_l, p_k)" in out


def test_verify_float_table_is_checked_exactly(tmp_path, capsys):
    table = dict(PERTURBED_TABLE, mode="float", brackets=PERTURBED_TABLE["brackets"][1:])
    assert main(["verify", "--table", write_json(tmp_path / "t.json", table)]) == EXIT_OK


@pytest.mark.parametrize(
    "argv",
    [
        ["verify", "--space", "type3"],
        ["verify", "--space", "type1", "--kappa", "0", "--kappa-tilde", "1"],
        ["verify", "--table", "/nonexistent/table.json"],
        ["bogus"],
        [],
    ],
)
def test_usage_errors(argv):
    assert main(argv) == EXIT_USAGE


def test_derive_commutative_golden(capsys):
    assert main(["derive", "--space", "commutative", "--force", "0", "0", "10", "--check"]) == EXIT_OK
    assert capsys.readouterr().out.splitlines() == [
        "# Hamilton equations",
        "d/dt x_k = p_k",
        "d/dt x_l = p_l",
        "d/dt x_gamma = p_gamma",
        "d/dt p_k = 0",
        "d/dt p_l = 0",
        "d/dt p_gamma = 10",
        "# Newton equations",
        "m x_k'' = 0",
        "m x_l'' = 0",
        "m x_gamma'' = 10",
        "CHECK PASS: derived equations match the reference equations exactly",
    ]


@pytest.mark.parametrize(
    "space",
    [
        ["--space", "type1", "--kappa", "410", "--kappa-tilde", "10"],
        ["--space", "type2", "--kappa", "700", "--kappa-tilde", "100", "--kappa-bar", "10"],
        ["--space", "type2", "--kappa", "3", "--kappa-tilde", "5", "--kappa-bar", "7", "--axes", "3", "1", "2"],
    ],
)
def test_derive_check_matches(space, capsys):
    assert main(["derive", *space, "--mass", "2", "--force", "1", "-0.5", "3", "--check", "--exact"]) == EXIT_OK
    assert "CHECK PASS" in capsys.readouterr().out


# --- simulate / analytic / compare -------------------------------------------


def test_simulate_uniform_acceleration(tmp_path):
    cfg = {
        "space": {"kind": "commutative"},
        "hamiltonian": {"mass": 1, "force": [0, 0, 10]},
        "time_span": [0, 1],
        "integrator": {"step": 1e-3},
        "outputs": {"csv": str(tmp_path / "run.csv")},
    }
    assert main(["simulate", write_json(tmp_path / "c.json", cfg)]) == EXIT_OK
    header, data = read_csv(tmp_path / "run.csv")
    assert header[:4] == ["t", "x_k", "x_l", "x_gamma"]
    assert data[-1, 0] == 1.0
    assert abs(data[-1, 3] - 5.0) < 1e-10
    side = json.loads((tmp_path / "run.json").read_text())
    assert side["config"] == cfg and "max_drift" in side["energy"]


def test_simulate_type2_free_particle(tmp_path):
    cfg = {
        "space": {"kind": "type2", "kappa_bar": 500},
        "initial": {"v0": [1, 1, 0]},
        "time_span": [0, 10],
        "integrator": {"step": 1e-2},
    }
    assert main(["simulate", write_json(tmp_path / "c.json", cfg), "--out", str(tmp_path)]) == EXIT_OK
    _, data = read_csv(tmp_path / "trajectory.csv")
    assert abs(data[-1, 3] + 0.2) < 1e-8


def test_simulate_is_byte_identical(tmp_path):
    cfg = {"time_span": {"figure": 3, "side": "left"}, "integrator": {"step": 1e-3, "record_every": 50}}
    path = write_json(tmp_path / "c.json", cfg)
    main(["simulate", path, "--out", str(tmp_path / "a")])
    main(["simulate", path, "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "trajectory.csv").read_bytes() == (tmp_path / "b" / "trajectory.csv").read_bytes()


def test_simulate_integrator_failure_exits_2(tmp_path):
    cfg = {"space": {"kind": "commutative"}, "time_span": [0, 1], "integrator": {"step": 1e-3, "max_steps": 10}}
    assert main(["simulate", write_json(tmp_path / "c.json", cfg), "--out", str(tmp_path)]) == EXIT_FAILED


@pytest.mark.parametrize(
    "cfg, key",
    [
        ({"time_span": [0, 1], "colour": "red"}, "colour"),
        ({"time_span": [0, 1], "integrator": {"stepsize": 0.1}}, "stepsize"),
        ({"time_span": [0, 1], "space": {"kind": "type1", "kappa": "x"}}, "space"),
        ({"time_span": {"figure": 9, "side": "left"}}, "time_span"),
        ({"space": {"kind": "commutative"}}, "time_span"),
        ({"time_span": [0, 1], "integrator": {"method": "euler"}}, "integrator/method"),
    ],
)
def test_config_errors_name_the_key(tmp_path, capsys, cfg, key):
    assert main(["simulate", write_json(tmp_path / "c.json", cfg), "--out", str(tmp_path)]) == EXIT_USAGE
    assert key in capsys.readouterr().err


@pytest.mark.parametrize("figure", [1, 2, 4])
def test_compare_figures_left(tmp_path, capsys, figure):
    path = write_json(tmp_path / "c.json", {"time_span": {"figure": figure, "side": "left"}})
    assert main(["compare", path]) == EXIT_OK
    line = capsys.readouterr().out
    assert line.startswith("PASS")
    assert float(line.split()[4]) < 1e-6


def test_compare_reports_failure_against_tight_tolerance(tmp_path, capsys):
    cfg = {"time_span": {"figure": 1, "side": "left"}, "integrator": {"step": 0.05}}
    assert main(["compare", write_json(tmp_path / "c.json", cfg), "--tol", "1e-14"]) == EXIT_FAILED
    assert capsys.readouterr().out.startswith("FAIL")


def test_analytic_writes_closed_form(tmp_path):
    cfg = {"time_span": {"figure": 1, "side": "left"}, "samples": 11}
    assert main(["analytic", write_json(tmp_path / "c.json", cfg), "--out", str(tmp_path)]) == EXIT_OK
    header, data = read_csv(tmp_path / "analytic.csv")
    assert len(data) == 11 and header[0] == "t"
    assert np.allclose(data[:, 3], 5 * data[:, 0] ** 2, rtol=1e-13)


# --- solve ---------------------------------------------------------------------


def test_solve_with_type1_start(tmp_path, capsys):
    cfg = {"restarts": 0, "initial_spaces": [{"kind": "type1", "kappa": 410, "kappa_tilde": 10, "axes": [2, 3, 1]}]}
    out = tmp_path / "cat.jsonl"
    assert main(["solve", write_json(tmp_path / "s.json", cfg), "--out", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert json.loads(lines[0])["count"] == 1
    rec = json.loads(lines[1])
    assert rec["label"] == "TypeI(kappa=410, kappa_tilde=10)"
    assert rec["residual_norm"] < 1e-10
    assert "TypeI" in capsys.readouterr().out


def test_solve_type2_prior(tmp_path):
    cfg = {"restarts": 10, "seed": 1, "sparsity_prior": {"like": {"kind": "type2", "kappa": 7, "kappa_tilde": 3, "kappa_bar": 5}}}
    out = tmp_path / "cat.jsonl"
    assert main(["solve", write_json(tmp_path / "s.json", cfg), "--out", str(out)]) == EXIT_OK
    records = [json.loads(s) for s in out.read_text().splitlines()[1:]]
    assert records and all(r["residual_norm"] < 1e-10 for r in records)


def test_solve_empty_catalogue_is_success(tmp_path):
    cfg = {"restarts": 1, "max_iters": 0, "residual_tol": 1e-300}
    out = tmp_path / "cat.jsonl"
    assert main(["solve", write_json(tmp_path / "s.json", cfg), "--out", str(out)]) == EXIT_OK
    assert json.loads(out.read_text())["count"] == 0


def test_solve_write_failure_exits_2(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    cfg = write_json(tmp_path / "s.json", {"restarts": 1})
    assert main(["solve", cfg, "--out", str(blocker / "cat.jsonl")]) == EXIT_FAILED


def test_global_flags_before_subcommand(tmp_path):
    cfg = write_json(tmp_path / "s.json", {"restarts": 2})
    main(["--seed", "4", "--out", str(tmp_path / "a.jsonl"), "solve", cfg])
    main(["solve", cfg, "--seed", "4", "--out", str(tmp_path / "b.jsonl")])
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    assert json.loads((tmp_path / "a.jsonl").read_text().splitlines()[0])["config"]["seed"] == 4


# --- figure ----------------------------------------------------------------------


def test_figure_1_left(tmp_path):
    assert main(["figure", "1", "left", "--out", str(tmp_path)]) == EXIT_OK
    side = json.loads((tmp_path / "deformed.json").read_text())
    p = side["preset"]
    assert (p["kappa"], p["kappa_tilde"], p["force_gamma"], p["v_l0"], p["mass"]) == (410, 10, "10", "1", "1")
    assert side["time_span"] == [0.0, pytest.approx(10 * math.pi)]
    _, data = read_csv(tmp_path / "deformed.csv")
    assert len(data) == 2000 and data[-1, 0] == pytest.approx(10 * math.pi)


def test_figure_3_right_parameters(tmp_path):
    assert main(["figure", "3", "right", "--out", str(tmp_path)]) == EXIT_OK
    p = json.loads((tmp_path / "deformed.json").read_text())["preset"]
    assert (p["kappa"], p["kappa_tilde"], p["kappa_bar"], p["force_gamma"]) == (100, 700, 10, "196000")


def test_figure_2_undeformed_baseline(tmp_path):
    assert main(["figure", "2", "left", "--out", str(tmp_path)]) == EXIT_OK
    _, data = read_csv(tmp_path / "undeformed.csv")
    t = data[:, 0]
    fg = json.loads((tmp_path / "undeformed.json").read_text())["hamiltonian"]["force"][2]
    assert np.all(data[:, 1] == 0)
    assert np.allclose(data[:, 2], t, rtol=1e-14)
    assert np.allclose(data[:, 3], float(eval(fg)) * t**2 / 2, rtol=1e-13)


def test_figure_sidecar_roundtrip(tmp_path):
    assert main(["figure", "4", "right", "--out", str(tmp_path / "fig")]) == EXIT_OK
    config = json.loads((tmp_path / "fig" / "deformed.json").read_text())["config"]
    assert config == figure_config(4, "right")
    path = write_json(tmp_path / "again.json", dict(config, outputs={"csv": str(tmp_path / "again.csv")}))
    assert main(["analytic", path]) == EXIT_OK
    assert (tmp_path / "again.csv").read_bytes() == (tmp_path / "fig" / "deformed.csv").read_bytes()


def test_unknown_figure(tmp_path):
    assert main(["figure", "7", "left", "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["figure", "1", "middle", "--out", str(tmp_path)]) == EXIT_USAGE
