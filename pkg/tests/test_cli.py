"""End-to-end checks of the trunc-mc command line."""
import csv
import json
import os

import numpy as np
import pytest

from truncmc import cli
from truncmc.errors import InternalCheckError
from truncmc.schedule import coefficients


def run_cli(argv):
    return cli.main([str(a) for a in argv])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# schedule command


def test_schedule_single_step_horizon(tmp_path):
    out = tmp_path / "s"
    code = run_cli(["schedule", "--gamma", 0.5, "--horizon", 1, "--budget", 7,
                    "--out", out])
    assert code == 0
    header, rows = read_csv(out / "schedule.csv")
    assert header == ["schema_version", "t", "c_t", "sqrt_c_t", "n_bar_t",
                      "n_tilde_t", "m_tilde_t"]
    assert len(rows) == 1
    # with one step every transition is a length-1 trajectory
    assert int(rows[0][5]) == 7
    assert int(rows[0][6]) == 7


def test_schedule_csv_matches_library(tmp_path):
    out = tmp_path / "s"
    assert run_cli(["schedule", "--gamma", 0.95, "--horizon", 100,
                    "--budget", 5000, "--out", out]) == 0
    _, rows = read_csv(out / "schedule.csv")
    assert len(rows) == 100
    c = np.array([float(r[2]) for r in rows])
    n = np.array([int(r[5]) for r in rows])
    m = np.array([int(r[6]) for r in rows])
    assert np.allclose(c, coefficients(0.95, 100), rtol=0, atol=0)
    assert n[0] > 0 and np.all(np.diff(n) <= 0)
    assert n.sum() == 5000  # sum over steps equals the transition budget
    assert m[-1] >= 1
    summary = read_json(out / "summary.json")
    for key in ("gamma", "T", "budget", "h_star", "ci_width_optimal",
                "ci_width_uniform", "ratio_bound", "lambda0"):
        assert key in summary
    assert summary["ci_width_optimal"] < summary["ci_width_uniform"]


def test_schedule_uniform_gap_shrinks_near_undiscounted(tmp_path):
    ratios = {}
    for gamma in (0.95, 0.999):
        out = tmp_path / str(gamma)
        assert run_cli(["schedule", "--gamma", gamma, "--horizon", 100,
                        "--budget", 5000, "--out", out]) == 0
        summary = read_json(out / "summary.json")
        ratios[gamma] = summary["ci_width_optimal"] / summary["ci_width_uniform"]
    # weak discounting leaves little room to beat equal-length collection
    assert ratios[0.999] > ratios[0.95]
    assert ratios[0.999] > 0.9


# ---------------------------------------------------------------------------
# settings resolution


def test_config_file_and_flag_override(tmp_path):
    config = tmp_path / "run.ini"
    config.write_text(
        "[schedule]\ngamma = 0.9\nhorizon = 20\nbudget = 100\n"
    )
    out = tmp_path / "s"
    assert run_cli(["schedule", "--config", config, "--budget", 200,
                    "--out", out]) == 0
    summary = read_json(out / "summary.json")
    assert summary["gamma"] == 0.9
    assert summary["T"] == 20
    assert summary["budget"] == 200  # flag beats the file


def test_manifest_records_resolved_settings(tmp_path):
    out = tmp_path / "s"
    run_cli(["schedule", "--gamma", 0.9, "--horizon", 10, "--budget", 50,
             "--out", out])
    manifest = read_json(out / "manifest.json")
    assert manifest["command"] == "schedule"
    assert manifest["settings"]["gamma"] == 0.9
    assert manifest["settings"]["delta"] == 0.1  # default, made explicit
    assert manifest["outputs"]["schedule_csv"] == "schedule.csv"
    assert manifest["schedule_summary"]["budget"] == 50
    assert manifest["duration_seconds"] >= 0


def test_manifest_rejects_wrong_command(tmp_path):
    out = tmp_path / "s"
    run_cli(["schedule", "--gamma", 0.9, "--horizon", 10, "--budget", 50,
             "--out", out])
    assert run_cli(["pac", "--config", out / "manifest.json"]) == 3


# ---------------------------------------------------------------------------
# exit codes


def test_exit_codes(tmp_path):
    assert run_cli(["schedule", "--no-such-flag"]) == 2
    assert run_cli(["frobnicate"]) == 2
    # parsed fine, but the value is out of range
    assert run_cli(["schedule", "--gamma", 1.5, "--horizon", 10, "--budget", 50,
                    "--out", tmp_path / "a"]) == 3
    # parsed fine, but required settings never arrived
    assert run_cli(["schedule", "--gamma", 0.9]) == 3


def test_internal_failures_exit_4(monkeypatch, capsys):
    def boom(settings):
        raise InternalCheckError("invariant violated")

    monkeypatch.setitem(cli.COMMANDS, "pac", boom)
    code = run_cli(["pac", "--gamma", 0.9, "--horizon", 10, "--epsilon", 0.1])
    assert code == 4
    assert "invariant" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# evaluate command


EVAL_ARGS = ["evaluate", "--env", "milestone", "--gamma", 0.95, "--horizon", 10,
             "--budget", "40,80", "--dcs", "both", "--repeats", 2]


def test_evaluate_outputs_and_determinism(tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert run_cli(EVAL_ARGS + ["--out", out_a]) == 0
    assert run_cli(EVAL_ARGS + ["--out", out_b]) == 0
    assert (out_a / "runs.csv").read_bytes() == (out_b / "runs.csv").read_bytes()
    assert (out_a / "mse.csv").read_bytes() == (out_b / "mse.csv").read_bytes()

    header, rows = read_csv(out_a / "runs.csv")
    assert header == ["schema_version", "budget", "dcs", "mode", "repeat",
                      "estimate", "truth", "squared_error"]
    assert len(rows) == 2 * 2 * 2  # budgets x schedules x repeats
    for row in rows:
        est, truth, sq = float(row[5]), float(row[6]), float(row[7])
        assert sq == (est - truth) ** 2

    _, agg = read_csv(out_a / "mse.csv")
    assert len(agg) == 4
    assert {r[2] for r in agg} == {"optimal", "uniform"}


def test_evaluate_rerun_from_manifest(tmp_path):
    out, rerun = tmp_path / "a", tmp_path / "b"
    assert run_cli(EVAL_ARGS + ["--out", out]) == 0
    assert run_cli(["evaluate", "--config", out / "manifest.json",
                    "--out", rerun]) == 0
    assert (out / "runs.csv").read_bytes() == (rerun / "runs.csv").read_bytes()


def test_evaluate_off_mode_runs(tmp_path):
    out = tmp_path / "off"
    code = run_cli(["evaluate", "--env", "chain", "--gamma", 0.9,
                    "--budget", 30, "--dcs", "optimal", "--mode", "off",
                    "--repeats", 3, "--out", out])
    assert code == 0
    _, rows = read_csv(out / "runs.csv")
    assert all(row[3] == "off" for row in rows)
    # chain pays +/-1 at the final step only; the target return is exactly 0
    assert all(float(row[6]) == 0.0 for row in rows)


def test_evaluate_rejects_env_without_closed_form(tmp_path):
    assert run_cli(["evaluate", "--env", "dam", "--gamma", 0.95,
                    "--budget", 100, "--out", tmp_path / "x"]) == 3


def test_evaluate_seed_changes_draws(tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    base = ["evaluate", "--env", "chain", "--gamma", 0.9, "--budget", 30,
            "--dcs", "uniform", "--repeats", 2]
    assert run_cli(base + ["--seeds", 0, "--out", out_a]) == 0
    assert run_cli(base + ["--seeds", 1, "--out", out_b]) == 0
    assert (out_a / "runs.csv").read_bytes() != (out_b / "runs.csv").read_bytes()


# ---------------------------------------------------------------------------
# optimize command


OPT_ARGS = ["optimize", "--env", "corridor-sparse", "--gamma", 0.99,
            "--horizon", 15, "--budget", 300, "--seeds", "3,4",
            "--online-iterations", 2, "--offline-iterations", 2,
            "--eval-episodes", 3]


def test_optimize_layout_and_rerun(tmp_path):
    out, rerun = tmp_path / "a", tmp_path / "b"
    assert run_cli(OPT_ARGS + ["--out", out]) == 0
    for seed in (3, 4):
        header, rows = read_csv(out / f"seed-{seed}" / "iterations.csv")
        assert header == ["schema_version", "iteration", "surrogate_final",
                          "disc_return", "undisc_return", "step_count",
                          "r_max_eff"]
        assert len(rows) == 3  # initial evaluation plus two updates
        assert [int(r[1]) for r in rows] == [0, 1, 2]
        assert os.path.exists(out / f"seed-{seed}" / "policy.json")
    header, rows = read_csv(out / "curve.csv")
    assert len(rows) == 3

    assert run_cli(["optimize", "--config", out / "manifest.json",
                    "--out", rerun]) == 0
    for name in ("curve.csv", "seed-3/iterations.csv", "seed-4/policy.json"):
        assert (out / name).read_bytes() == (rerun / name).read_bytes()


def test_optimize_algo_selects_collection_mode(tmp_path):
    out = tmp_path / "pois"
    args = [a for a in OPT_ARGS]
    args[args.index("3,4")] = "7"
    assert run_cli(args + ["--algo", "pois", "--out", out]) == 0
    manifest = read_json(out / "manifest.json")
    assert manifest["settings"]["algo"] == "pois"
    # full-length collection: every trajectory runs to the horizon
    summary = manifest["schedule_summary"]
    assert summary["full_length_trajectories"] == summary["n_first"]


def test_optimize_dam_budget_in_days(tmp_path):
    assert run_cli(["optimize", "--env", "dam", "--gamma", 0.95,
                    "--budget", 100, "--out", tmp_path / "x"]) == 3


# ---------------------------------------------------------------------------
# pac command


def test_pac_prints_report_and_writes_json(tmp_path, capsys):
    out = tmp_path / "p"
    code = run_cli(["pac", "--gamma", 0.999, "--horizon", 500,
                    "--epsilon", 0.1, "--delta", 0.05, "--out", out])
    assert code == 0
    text = capsys.readouterr().out
    assert "full-length" in text
    assert "improvement factor" in text
    payload = read_json(out / "pac.json")
    assert payload["budget_optimized"] <= payload["budget_uniform"]
    # T(1 - gamma) = 500 * 0.001 < 1: no reduction promised at this pairing
    assert payload["improvement_factor"] == 1.0
    then = read_json(out / "pac.json")
    assert then == payload


def test_pac_improvement_factor_scales(tmp_path):
    out = tmp_path / "p"
    assert run_cli(["pac", "--gamma", 0.9, "--horizon", 1000,
                    "--epsilon", 0.1, "--delta", 0.05, "--out", out]) == 0
    payload = read_json(out / "pac.json")
    assert payload["improvement_factor"] == pytest.approx(100.0)
    ratio = payload["budget_uniform"] / payload["budget_optimized"]
    assert ratio == pytest.approx(payload["improvement_factor"])
