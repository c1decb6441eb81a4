"""Command-line harness: schedule tables, MSE studies, optimization, budgets.

Four subcommands under one entry point::

    trunc-mc schedule  --gamma 0.95 --horizon 100 --budget 5000 --out runs/s1
    trunc-mc evaluate  --env milestone --gamma 0.95 --budget 1000,2000 --dcs both
    trunc-mc optimize  --env corridor-dense --algo ttpois --seeds 0,1,2,3,4
    trunc-mc pac       --gamma 0.99 --horizon 100 --epsilon 0.1 --delta 0.05

Every run resolves its settings from three layers — built-in defaults, then an
optional ``--config`` file, then explicit flags (flags win) — and writes the
resolved settings into a ``manifest.json`` next to its outputs.  The config
file is either an INI file with one section per subcommand, or a previous
run's manifest: re-running from a manifest reproduces the run's data files
byte for byte.

Data files are RFC-4180 CSVs whose first column is a constant
``schema_version``, plus JSON summaries.  All files are written atomically
(temp file, then rename).  Exit codes: 0 success, 2 argument error, 3 invalid
input values, 4 internal invariant violation.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import os
import sys
import time

import numpy as np

from .batches import collect_batch
from .envs import exact_return, make_env
from .errors import DomainError, InternalCheckError
from .estimators import estimate_return, off_policy_estimate
from .policies import SoftmaxPolicy
from .schedule import (
    coefficients,
    confidence_width,
    optimal_schedule,
    pac_budget,
    round_allocation,
    rounding_ratio_bound,
    saturation_budget,
    solve_relaxed,
    uniform_schedule,
)
from .seeding import child_seed
from .ttpois import MODES, OptimConfig, run as run_optimizer

SCHEMA_VERSION = 1
MANIFEST_FORMAT = "run-manifest"
ALGO_MODES = {"ttpois": "tt", "pois": "uniform"}
DAYS_PER_DAM_DECISION = 3


# ---------------------------------------------------------------------------
# settings schemas: defaults, converters, help — shared by flags and config


def _int_list(value) -> list:
    if isinstance(value, list):
        return [int(v) for v in value]
    return [int(part) for part in str(value).split(",") if part.strip()]


def _hidden_layers(value) -> list:
    if value in ("", None):
        return []
    return _int_list(value)


def _optional_float(value):
    if value in ("", "none", "None", None):
        return None
    return float(value)


def _optional_str(value):
    if value in ("", "none", "None", None):
        return None
    return str(value)


class Setting:
    def __init__(self, convert, default=None, help="", choices=None, required=False):
        self.convert = convert
        self.default = default
        self.help = help
        self.choices = choices
        self.required = required


SCHEMAS = {
    "schedule": {
        "gamma": Setting(float, required=True, help="discount factor in (0, 1)"),
        "horizon": Setting(int, required=True, help="estimation horizon T"),
        "budget": Setting(int, required=True, help="transition budget"),
        "delta": Setting(float, 0.1, help="confidence level for reported widths"),
        "out": Setting(str, "runs/schedule", help="output directory"),
    },
    "evaluate": {
        "env": Setting(str, "milestone", help="environment with a closed-form return",
                       choices=("milestone", "chain")),
        "gamma": Setting(float, required=True, help="discount factor in (0, 1)"),
        "horizon": Setting(_optional_float, None,
                           help="estimation horizon (default: environment horizon)"),
        "budget": Setting(_int_list, required=True,
                          help="comma-separated transition budgets"),
        "dcs": Setting(str, "both", choices=("optimal", "uniform", "both"),
                       help="which trajectory-length schedule(s) to run"),
        "mode": Setting(str, "on", choices=("on", "off"),
                        help="on-policy or importance-weighted estimation"),
        "policy": Setting(_optional_str, None,
                          help="behavior policy JSON file (default: uniform actions)"),
        "target": Setting(_optional_str, None,
                          help="off mode target policy JSON file "
                               "(default: fixed (0.49, 0.51) action split)"),
        "delta": Setting(float, 0.1, help="confidence level"),
        "repeats": Setting(int, 50, help="independent estimations per cell"),
        "seeds": Setting(_int_list, [0], help="master seed (first entry is used)"),
        "workers": Setting(int, 1, help="parallel collection workers"),
        "out": Setting(str, "runs/evaluate", help="output directory"),
    },
    "optimize": {
        "env": Setting(str, required=True,
                       choices=("corridor-sparse", "corridor-dense", "dam"),
                       help="environment to optimize in"),
        "algo": Setting(str, "ttpois", choices=tuple(ALGO_MODES),
                        help="length-aware (ttpois) or full-length (pois) collection"),
        "gamma": Setting(float, required=True, help="discount factor in (0, 1)"),
        "horizon": Setting(_optional_float, None,
                           help="schedule horizon (default: environment horizon)"),
        "budget": Setting(int, required=True,
                          help="per-iteration transition budget (days for dam)"),
        "delta": Setting(float, 0.7, help="penalty confidence level"),
        "clip": Setting(_optional_float, 100.0, help="importance weight clip"),
        "online-iterations": Setting(int, 10, help="collect/update cycles"),
        "offline-iterations": Setting(int, 10, help="gradient steps per batch"),
        "eval-episodes": Setting(int, 20, help="fresh rollouts per evaluation"),
        "hidden": Setting(_hidden_layers, [], help="policy net widths, e.g. 64,32"),
        "seeds": Setting(_int_list, [0, 1, 2, 3, 4],
                         help="comma-separated seeds, one run per seed"),
        "out": Setting(str, "runs/optimize", help="output directory"),
    },
    "pac": {
        "gamma": Setting(float, required=True, help="discount factor in (0, 1)"),
        "horizon": Setting(int, required=True, help="estimation horizon T"),
        "epsilon": Setting(float, required=True, help="target accuracy"),
        "delta": Setting(float, 0.05, help="failure probability"),
        "out": Setting(str, "runs/pac", help="output directory"),
    },
}


def _load_config_values(path: str, command: str) -> dict:
    """Raw settings from an INI section or a previous run's manifest."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise DomainError(f"cannot read config file: {exc}") from None
    stripped = text.lstrip()
    if stripped.startswith("{"):
        data = json.loads(text)
        if data.get("format") == MANIFEST_FORMAT:
            if data.get("command") != command:
                raise DomainError(
                    f"manifest records a {data.get('command')!r} run, "
                    f"cannot rerun it as {command!r}"
                )
            return dict(data["settings"])
        return dict(data.get(command, data))
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise DomainError(f"bad config file: {exc}") from None
    if not parser.has_section(command):
        return {}
    return dict(parser.items(command))


def resolve_settings(command: str, args: argparse.Namespace) -> dict:
    """Defaults, then config file, then flags; convert and validate."""
    schema = SCHEMAS[command]
    settings = {name: setting.default for name, setting in schema.items()}
    layers = []
    if getattr(args, "config", None):
        layers.append(_load_config_values(args.config, command))
    layers.append(
        {
            name: getattr(args, name.replace("-", "_"))
            for name in schema
            if getattr(args, name.replace("-", "_"), None) is not None
        }
    )
    for layer in layers:
        for name, raw in layer.items():
            if name not in schema:
                raise DomainError(f"unknown setting {name!r} for {command}")
            try:
                settings[name] = schema[name].convert(raw)
            except (TypeError, ValueError) as exc:
                raise DomainError(f"bad value for {name!r}: {exc}") from None
    for name, setting in schema.items():
        if setting.required and settings[name] is None:
            raise DomainError(f"missing required setting --{name}")
        if setting.choices and settings[name] is not None and settings[name] not in setting.choices:
            raise DomainError(
                f"--{name} must be one of {', '.join(setting.choices)}, got {settings[name]!r}"
            )
    return settings


# ---------------------------------------------------------------------------
# atomic output helpers


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_json(path: str, payload) -> None:
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_csv(path: str, header: list, rows) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(header)
    writer.writerows(rows)
    _atomic_write(path, buffer.getvalue())


def _versions() -> dict:
    try:
        from importlib.metadata import version

        pkg = version("artifact")
    except Exception:
        pkg = "unknown"
    return {
        "package": pkg,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
    }


def write_manifest(out: str, command: str, settings: dict, outputs: dict,
                   started: float, schedule_summary: dict | None = None,
                   notes: dict | None = None) -> str:
    payload = {
        "format": MANIFEST_FORMAT,
        "version": SCHEMA_VERSION,
        "command": command,
        "settings": settings,
        "outputs": outputs,
        "schedule_summary": schedule_summary,
        "notes": notes or {},
        "duration_seconds": round(time.monotonic() - started, 3),
        "versions": _versions(),
    }
    path = os.path.join(out, "manifest.json")
    write_json(path, payload)
    return path


def _schedule_for(dcs: str, gamma: float, horizon: int, budget: int, delta: float):
    if dcs == "optimal":
        return optimal_schedule(gamma, horizon, budget, delta)
    return uniform_schedule(horizon, budget, gamma=gamma)


def _schedule_summary(schedule) -> dict:
    return {
        "horizon": int(schedule.horizon),
        "budget": int(schedule.budget),
        "n_first": int(schedule.n[0]),
        "n_last": int(schedule.n[-1]),
        "full_length_trajectories": int(schedule.m[-1]),
    }


def _load_policy(path: str | None, obs_dim: int, n_actions: int) -> SoftmaxPolicy:
    if path is None:
        return SoftmaxPolicy(obs_dim, n_actions)
    try:
        with open(path) as fh:
            return SoftmaxPolicy.from_json(fh.read())
    except OSError as exc:
        raise DomainError(f"cannot read policy file: {exc}") from None


def _default_off_target(obs_dim: int) -> SoftmaxPolicy:
    # constant (0.49, 0.51) action split: softmax of (log .49, log .51)
    params = np.zeros(2 * obs_dim + 2)
    params[-2:] = np.log([0.49, 0.51])
    return SoftmaxPolicy(obs_dim, 2, params=params)


# ---------------------------------------------------------------------------
# subcommands


def cmd_schedule(settings: dict) -> int:
    started = time.monotonic()
    out = settings["out"]
    os.makedirs(out, exist_ok=True)
    gamma, horizon = settings["gamma"], settings["horizon"]
    budget, delta = settings["budget"], settings["delta"]

    relaxed = solve_relaxed(gamma, horizon, budget, delta)
    schedule = round_allocation(relaxed)
    coeffs = coefficients(gamma, horizon)
    rows = [
        (
            SCHEMA_VERSION,
            t,
            repr(float(coeffs[t])),
            repr(float(np.sqrt(coeffs[t]))),
            repr(float(relaxed.n_frac[t])),
            int(schedule.n[t]),
            int(schedule.m[t]),
        )
        for t in range(horizon)
    ]
    write_csv(
        os.path.join(out, "schedule.csv"),
        ["schema_version", "t", "c_t", "sqrt_c_t", "n_bar_t", "n_tilde_t", "m_tilde_t"],
        rows,
    )
    width_opt = confidence_width(schedule.n, coeffs, delta)
    width_uniform = confidence_width(np.full(horizon, budget / horizon), coeffs, delta)
    summary = {
        "gamma": gamma,
        "T": horizon,
        "budget": budget,
        "delta": delta,
        "h_star": int(relaxed.cutover),
        "ci_width_optimal": width_opt,
        "ci_width_uniform": width_uniform,
        "width_ratio": width_opt / width_uniform,
        "ratio_bound": rounding_ratio_bound(relaxed),
        "lambda0": saturation_budget(gamma, horizon),
    }
    write_json(os.path.join(out, "summary.json"), summary)
    write_manifest(
        out,
        "schedule",
        settings,
        {"schedule_csv": "schedule.csv", "summary_json": "summary.json"},
        started,
        _schedule_summary(schedule),
    )
    print(
        f"schedule: T={horizon} budget={budget} cutover={relaxed.cutover} "
        f"width {width_opt:.6g} vs uniform {width_uniform:.6g}"
    )
    return 0


def cmd_evaluate(settings: dict) -> int:
    started = time.monotonic()
    out = settings["out"]
    os.makedirs(out, exist_ok=True)
    gamma = settings["gamma"]
    env_kwargs = {}
    if settings["horizon"] is not None:
        env_kwargs["horizon"] = int(settings["horizon"])
    env = make_env(settings["env"], **env_kwargs)
    horizon = env.horizon
    behavior = _load_policy(settings["policy"], env.observation_dim, env.n_actions)
    off = settings["mode"] == "off"
    if off:
        if settings["target"] is not None:
            target = _load_policy(settings["target"], env.observation_dim, env.n_actions)
        else:
            target = _default_off_target(env.observation_dim)
        truth = exact_return(env, target, gamma)
    else:
        target = None
        truth = exact_return(env, behavior, gamma)

    dcs_kinds = ("optimal", "uniform") if settings["dcs"] == "both" else (settings["dcs"],)
    dcs_codes = {"optimal": 0, "uniform": 1}
    seed = settings["seeds"][0]
    repeats = settings["repeats"]
    run_rows, agg_rows = [], []
    for budget_idx, budget in enumerate(settings["budget"]):
        for kind in dcs_kinds:
            schedule = _schedule_for(kind, gamma, horizon, budget, settings["delta"])
            errors = np.empty(repeats)
            for rep in range(repeats):
                master = child_seed(seed, "repeat", budget_idx, dcs_codes[kind], rep)
                batch = collect_batch(
                    env, behavior, schedule, master, workers=settings["workers"]
                )
                if off:
                    est = off_policy_estimate(batch, target, gamma)
                else:
                    est = estimate_return(batch, gamma)
                errors[rep] = (est - truth) ** 2
                run_rows.append(
                    (
                        SCHEMA_VERSION,
                        budget,
                        kind,
                        settings["mode"],
                        rep,
                        repr(float(est)),
                        repr(float(truth)),
                        repr(float(errors[rep])),
                    )
                )
            mse = float(errors.mean())
            half = float(1.96 * errors.std(ddof=1) / math.sqrt(repeats)) if repeats > 1 else 0.0
            agg_rows.append(
                (
                    SCHEMA_VERSION,
                    budget,
                    kind,
                    settings["mode"],
                    repeats,
                    repr(mse),
                    repr(mse - half),
                    repr(mse + half),
                )
            )
    write_csv(
        os.path.join(out, "runs.csv"),
        ["schema_version", "budget", "dcs", "mode", "repeat", "estimate", "truth",
         "squared_error"],
        run_rows,
    )
    write_csv(
        os.path.join(out, "mse.csv"),
        ["schema_version", "budget", "dcs", "mode", "repeats", "mse", "mse_ci_low",
         "mse_ci_high"],
        agg_rows,
    )
    write_manifest(
        out,
        "evaluate",
        settings,
        {"runs_csv": "runs.csv", "mse_csv": "mse.csv"},
        started,
    )
    for row in agg_rows:
        print(
            f"evaluate: budget={row[1]} dcs={row[2]} mode={row[3]} "
            f"mse={float(row[5]):.6g} ci=({float(row[6]):.6g}, {float(row[7]):.6g})"
        )
    return 0


def cmd_optimize(settings: dict) -> int:
    started = time.monotonic()
    out = settings["out"]
    os.makedirs(out, exist_ok=True)
    env = make_env(settings["env"])
    horizon = int(settings["horizon"]) if settings["horizon"] is not None else env.horizon
    budget = settings["budget"]
    budget_days = None
    if settings["env"] == "dam":
        # dam budgets are quoted in days; collection counts three-day decisions
        budget_days = budget
        if budget % DAYS_PER_DAM_DECISION:
            raise DomainError(
                f"dam budgets are in days and must be divisible by "
                f"{DAYS_PER_DAM_DECISION}, got {budget}"
            )
        budget //= DAYS_PER_DAM_DECISION
    config = OptimConfig(
        gamma=settings["gamma"],
        horizon=horizon,
        budget=budget,
        mode=ALGO_MODES[settings["algo"]],
        delta=settings["delta"],
        clip=settings["clip"],
        online_iterations=settings["online-iterations"],
        offline_iterations=settings["offline-iterations"],
        hidden=tuple(settings["hidden"]),
        eval_episodes=settings["eval-episodes"],
    )
    outputs = {}
    curves = {}
    schedule_summary = None
    for seed in settings["seeds"]:
        result = run_optimizer(env, config, seed=seed)
        schedule_summary = _schedule_summary(result.schedule)
        sub = os.path.join(out, f"seed-{seed}")
        os.makedirs(sub, exist_ok=True)
        rows = [
            (
                SCHEMA_VERSION,
                log.iteration,
                repr(float(log.surrogate_end)),
                repr(float(log.mean_return_discounted)),
                repr(float(log.mean_return)),
                log.accepted_steps,
                repr(float(log.r_max)),
            )
            for log in result.logs
        ]
        write_csv(
            os.path.join(sub, "iterations.csv"),
            ["schema_version", "iteration", "surrogate_final", "disc_return",
             "undisc_return", "step_count", "r_max_eff"],
            rows,
        )
        _atomic_write(os.path.join(sub, "policy.json"), result.policy.to_json() + "\n")
        outputs[f"seed-{seed}"] = f"seed-{seed}/iterations.csv"
        curves[seed] = result.logs
    iterations = range(config.online_iterations + 1)
    curve_rows = []
    for it in iterations:
        disc = np.array([curves[s][it].mean_return_discounted for s in settings["seeds"]])
        undisc = np.array([curves[s][it].mean_return for s in settings["seeds"]])
        k = len(settings["seeds"])
        half_d = float(1.96 * disc.std(ddof=1) / math.sqrt(k)) if k > 1 else 0.0
        half_u = float(1.96 * undisc.std(ddof=1) / math.sqrt(k)) if k > 1 else 0.0
        curve_rows.append(
            (
                SCHEMA_VERSION,
                it,
                repr(float(disc.mean())),
                repr(half_d),
                repr(float(undisc.mean())),
                repr(half_u),
            )
        )
    write_csv(
        os.path.join(out, "curve.csv"),
        ["schema_version", "iteration", "disc_return_mean", "disc_return_ci95",
         "undisc_return_mean", "undisc_return_ci95"],
        curve_rows,
    )
    outputs["curve_csv"] = "curve.csv"
    notes = None
    if budget_days is not None:
        notes = {
            "budget_days": budget_days,
            "budget_decisions": budget,
            "days_per_decision": DAYS_PER_DAM_DECISION,
        }
    write_manifest(out, "optimize", settings, outputs, started, schedule_summary,
                   notes=notes)
    final = curve_rows[-1]
    print(
        f"optimize: {settings['algo']} on {settings['env']}, "
        f"{len(settings['seeds'])} seed(s); final return "
        f"{float(final[4]):.4g} +/- {float(final[5]):.4g} (undiscounted)"
    )
    return 0


def cmd_pac(settings: dict) -> int:
    started = time.monotonic()
    out = settings["out"]
    os.makedirs(out, exist_ok=True)
    result = pac_budget(
        settings["gamma"], settings["horizon"], settings["epsilon"], settings["delta"]
    )
    payload = {
        "gamma": settings["gamma"],
        "T": settings["horizon"],
        "epsilon": settings["epsilon"],
        "delta": settings["delta"],
        "budget_uniform": result.uniform,
        "budget_optimized": result.optimized,
        "improvement_factor": result.improvement_factor,
        "condition_holds": result.condition_holds,
        "constant": result.constant,
    }
    write_json(os.path.join(out, "pac.json"), payload)
    write_manifest(out, "pac", settings, {"pac_json": "pac.json"}, started)
    print(f"budget with full-length collection: {result.uniform:.6g}")
    print(f"budget with optimized schedule:     {result.optimized:.6g}")
    print(f"sufficient budget:                  {min(result.uniform, result.optimized):.6g}")
    print(f"improvement factor:                 {result.improvement_factor:.6g}")
    print(
        "applicability condition "
        + ("holds" if result.condition_holds else "does not hold")
    )
    return 0


COMMANDS = {
    "schedule": cmd_schedule,
    "evaluate": cmd_evaluate,
    "optimize": cmd_optimize,
    "pac": cmd_pac,
}

HELP = {
    "schedule": "compute the width-optimal trajectory-length schedule",
    "evaluate": "measure estimator MSE against a closed-form return",
    "optimize": "run importance-weighted policy optimization",
    "pac": "sufficient budgets for an epsilon-accurate estimate",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trunc-mc",
        description="Budget-optimal truncated Monte Carlo policy evaluation.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command, schema in SCHEMAS.items():
        sub = subparsers.add_parser(command, help=HELP[command])
        sub.add_argument(
            "--config",
            help="INI file with a [%s] section, or a previous run's manifest.json"
            % command,
        )
        for name, setting in schema.items():
            extra = f" (default: {setting.default})" if setting.default is not None else ""
            sub.add_argument(f"--{name}", dest=name.replace("-", "_"),
                             help=setting.help + extra)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        settings = resolve_settings(args.command, args)
        return COMMANDS[args.command](settings)
    except SystemExit as exc:  # argparse errors (2) and --help (0)
        return int(exc.code or 0)
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except InternalCheckError as exc:
        print(f"internal check failed: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
