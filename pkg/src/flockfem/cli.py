"""Command-line surface: simulate / compare / converge / check.

Each command reads a JSON config, validates it strictly (unknown keys are
rejected), runs fully deterministically, and writes delimited output plus
rendered figures into the output directory. Exit codes: 0 ok, 2 config
error, 3 runtime/solver failure, 4 CFL violation in strict mode.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass

from . import diagnostics, plots, scenarios
from .errors import CFLViolation, ConfigError, FlockFemError
from .kernels import build_kernel_table, kernel_from_name
from .mesh import build_mesh
from .output import RunDirectory, default_switches
from .stepping import StepConfig, Stepper, VARIANTS

_COMMANDS = ("simulate", "compare", "converge", "check")

_SCENARIO_KEYS = {
    "simulate": {
        "preset", "initial_data", "variant", "num_elements", "quad_order", "k", "T",
        "kernel", "forcing", "sample_every", "cfl_mode", "cfl_ratio_max",
        "rho_phi_floor", "dxu_cap", "solver_tol",
    },
    "compare": {
        "preset", "num_elements", "quad_order", "k", "T", "kernel", "sample_every",
        "cfl_mode", "cfl_ratio_max", "rho_phi_floor", "dxu_cap", "solver_tol",
    },
    "converge": {"levels", "T", "cfl_ratio", "kernel", "quad_order", "forcing"},
    "check": {
        "preset", "initial_data", "variant", "num_elements", "quad_order", "kernel",
        "c_param",
    },
}


@dataclass
class RunConfig:
    command: str
    scenario: dict
    output_dir: str
    plots: bool
    resolved: dict  # full config with defaults applied, feeds the config hash


def _fail(msg: str):
    raise ConfigError(msg)


def _require(cond, msg):
    if not cond:
        _fail(msg)


def _resolve_kernel(value, default_kind):
    if value is None:
        value = default_kind
    if isinstance(value, str):
        return {"kind": value}
    if isinstance(value, dict):
        extra = set(value) - {"kind", "path"}
        _require(not extra, f"unknown kernel key '{sorted(extra)[0]}'")
        _require("kind" in value, "kernel object needs a 'kind'")
        return dict(value)
    _fail(f"kernel must be a string or object, got {type(value).__name__}")


def parse_config(path, command: str) -> RunConfig:
    """Load, validate and resolve a JSON run configuration.

    Raises ConfigError (exit code 2) on malformed input, unknown keys,
    missing required fields, or a command mismatch.
    """
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        _fail(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        _fail(f"malformed JSON in {path} at line {exc.lineno}: {exc.msg}")
    _require(isinstance(raw, dict), "config root must be a JSON object")

    top = dict(raw)
    declared = top.pop("command", command)
    _require(
        declared == command,
        f"config declares command '{declared}' but '{command}' was invoked",
    )
    scenario_raw = top.pop("scenario", None)
    _require(isinstance(scenario_raw, dict), "config needs a 'scenario' object")
    output_dir = top.pop("output_dir", "out")
    make_plots = top.pop("plots", True)
    _require(isinstance(make_plots, bool), "'plots' must be true or false")
    if top:
        _fail(f"unknown config key '{sorted(top)[0]}'")

    sc = dict(scenario_raw)
    allowed = _SCENARIO_KEYS[command]
    unknown = set(sc) - allowed
    if unknown:
        _fail(f"unknown scenario key '{sorted(unknown)[0]}'")

    resolved = {"command": command, "output_dir": str(output_dir), "plots": make_plots}
    if command == "converge":
        scenario = _resolve_converge(sc)
    else:
        scenario = _resolve_state_scenario(sc, command)
    resolved["scenario"] = scenario
    return RunConfig(command, scenario, str(output_dir), make_plots, resolved)


def _positive_number(sc, key, default=None, required=False, integer=False):
    if key not in sc:
        _require(not required, f"scenario needs '{key}'")
        return default
    v = sc.pop(key)
    ok = isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0
    _require(ok, f"'{key}' must be a positive number, got {v!r}")
    if integer:
        _require(float(v).is_integer(), f"'{key}' must be an integer, got {v!r}")
        return int(v)
    return float(v)


def _resolve_state_scenario(sc, command) -> dict:
    preset = sc.pop("preset", None)
    initial_data = sc.pop("initial_data", None)
    if command == "compare" and preset is None and initial_data is None:
        preset = "two_flock"
    _require(
        (preset is None) != (initial_data is None),
        "scenario needs exactly one of 'preset' or 'initial_data'",
    )
    if preset is not None:
        _require(preset in ("two_flock", "manufactured"), f"unknown preset '{preset}'")

    if command == "compare":
        _require(preset == "two_flock", "compare requires the two_flock preset")
        variant = None
    else:
        variant = sc.pop("variant", None)
        if variant is None and (preset == "manufactured" or initial_data is not None):
            variant = "s_model"
        _require(variant in VARIANTS, f"'variant' must be one of {VARIANTS}, got {variant!r}")

    default_kernel = "constant" if preset == "manufactured" else "rational_sqrt"
    kernel = _resolve_kernel(sc.pop("kernel", None), default_kernel)

    out = {
        "preset": preset,
        "initial_data": initial_data,
        "variant": variant,
        "num_elements": _positive_number(sc, "num_elements", required=True, integer=True),
        "quad_order": _positive_number(sc, "quad_order", default=6, integer=True),
        "kernel": kernel,
    }
    if command == "check":
        out["c_param"] = _positive_number(sc, "c_param", default=1.0)
        return out

    forcing = sc.pop("forcing", None)
    if forcing is not None:
        _require(forcing in ("closed_form", "residual"),
                 f"'forcing' must be closed_form or residual, got {forcing!r}")
        _require(preset == "manufactured", "'forcing' needs the manufactured preset")
    elif preset == "manufactured":
        forcing = "closed_form" if kernel["kind"] == "constant" else "residual"
    cfl_mode = sc.pop("cfl_mode", "permissive")
    _require(cfl_mode in ("permissive", "strict"),
             f"'cfl_mode' must be permissive or strict, got {cfl_mode!r}")
    k = _positive_number(sc, "k", required=True)
    t_final = _positive_number(sc, "T", required=True)
    _require(t_final >= k, f"'T'={t_final} must cover at least one step of k={k}")
    ratio = t_final / k
    _require(abs(ratio - round(ratio)) <= 1e-6 * max(1.0, ratio),
             f"'T'={t_final} is not an integer number of steps of k={k}")
    out.update(
        {
            "k": k,
            "T": t_final,
            "forcing": forcing,
            "sample_every": _positive_number(sc, "sample_every", default=1, integer=True),
            "cfl_mode": cfl_mode,
            "cfl_ratio_max": _positive_number(sc, "cfl_ratio_max", default=0.25),
            "rho_phi_floor": _positive_number(sc, "rho_phi_floor", default=1e-10),
            "dxu_cap": _positive_number(sc, "dxu_cap", default=1e6),
            "solver_tol": _positive_number(sc, "solver_tol", default=1e-8),
        }
    )
    return out


def _resolve_converge(sc) -> dict:
    levels = sc.pop("levels", [2, 6])
    ok = (
        isinstance(levels, list)
        and len(levels) == 2
        and all(isinstance(v, int) and not isinstance(v, bool) for v in levels)
        and 1 <= levels[0] <= levels[1]
    )
    _require(ok, f"'levels' must be [lo, hi] with 1 <= lo <= hi, got {levels!r}")
    forcing = sc.pop("forcing", None)
    if forcing is not None:
        _require(forcing in ("closed_form", "residual"),
                 f"'forcing' must be closed_form or residual, got {forcing!r}")
    return {
        "levels": levels,
        "T": _positive_number(sc, "T", default=0.5),
        "cfl_ratio": _positive_number(sc, "cfl_ratio", default=0.25),
        "quad_order": _positive_number(sc, "quad_order", default=6, integer=True),
        "kernel": _resolve_kernel(sc.pop("kernel", None), "constant"),
        "forcing": forcing,
    }


# -- command execution ------------------------------------------------------------


def _build_problem(scenario):
    mesh = build_mesh(scenario["num_elements"], scenario["quad_order"])
    spec = kernel_from_name(scenario["kernel"]["kind"], scenario["kernel"].get("path"))
    table = build_kernel_table(mesh, spec)
    return mesh, table


def _initial_state(scenario, mesh, table, variant):
    if scenario.get("initial_data"):
        return scenarios.load_initial_csv(scenario["initial_data"], mesh)
    if scenario["preset"] == "two_flock":
        return scenarios.two_flock_preset(mesh, table, variant)
    return scenarios.ManufacturedSolution.state(mesh)


def _step_config(scenario, table, variant) -> StepConfig:
    forcing = None
    if scenario.get("forcing"):
        forcing = scenarios.manufactured_forcing(scenario["forcing"], table).as_tuple()
    return StepConfig(
        k=scenario["k"],
        T=scenario["T"],
        variant=variant,
        forcing=forcing,
        cfl_ratio_max=scenario["cfl_ratio_max"],
        cfl_strict=scenario["cfl_mode"] == "strict",
        rho_phi_floor=scenario["rho_phi_floor"],
        dxu_cap=scenario["dxu_cap"],
        solver_tol=scenario["solver_tol"],
    )


def _amplitude_summary(records):
    ts = [r.t for r in records]
    amps = [r.amplitude for r in records]
    summary = {
        "t_first": ts[0],
        "t_last": ts[-1],
        "amplitude_first": amps[0],
        "amplitude_last": amps[-1],
        "mass_first": records[0].mass,
        "mass_last": records[-1].mass,
        "momentum_first": records[0].momentum,
        "momentum_last": records[-1].momentum,
    }
    if amps[0] > 0 and amps[-1] > 0:
        summary["amplitude_ratio"] = amps[-1] / amps[0]
    try:
        fitted, _ = diagnostics.fit_decay_rate(ts, amps)
        summary["fitted_decay_rate"] = fitted
    except FlockFemError:
        pass
    return summary


def _cmd_simulate(cfg: RunConfig) -> int:
    sc = cfg.scenario
    mesh, table = _build_problem(sc)
    step_cfg = _step_config(sc, table, sc["variant"])
    initial = _initial_state(sc, mesh, table, sc["variant"])
    # a strict-mode CFL violation raises from run() before output is touched
    result = Stepper(table, step_cfg).run(initial, sample_every=sc["sample_every"])
    failure = f"{type(result.error).__name__}: {result.error}" if result.failed else None
    with RunDirectory(cfg.output_dir, cfg.resolved) as rd:
        rd.write_timeseries(result.records, failure=failure)
        rd.write_snapshots(result.snapshots, table, failure=failure)
        rd.write_json(_amplitude_summary(result.records), "summary.json")
        rd.write_run_meta(
            table,
            default_switches(mesh, step_cfg, {"sample_every": sc["sample_every"]}),
            status="failed" if result.failed else "ok",
            error=result.error,
        )
        if cfg.plots:
            plots.plot_timeseries(result.records, rd.path / "timeseries.png")
            plots.plot_snapshots(result.snapshots, table, rd.path / "snapshots.png")
    if result.failed:
        print(f"simulate: FAILED after {result.steps_completed} steps: {failure}", file=sys.stderr)
        return 3
    print(f"simulate: ok, {result.steps_completed} steps, outputs in {cfg.output_dir}")
    return 0


def _cmd_compare(cfg: RunConfig) -> int:
    sc = cfg.scenario
    mesh, table = _build_problem(sc)
    step_cfg = _step_config(sc, table, "s_model")
    result = scenarios.compare_models(mesh, table, step_cfg, sample_every=sc["sample_every"])
    with RunDirectory(cfg.output_dir, cfg.resolved) as rd:
        for variant, run in result.runs.items():
            failure = f"{type(run.error).__name__}: {run.error}" if run.failed else None
            rd.write_timeseries(run.records, name=f"timeseries_{variant}.csv", failure=failure)
            rd.write_snapshots(run.snapshots, table, name=f"snapshots_{variant}.csv", failure=failure)
        rd.write_pair_differences(result.pairs)
        rd.write_small_flock(result.small_flock)
        rd.write_run_meta(
            table,
            default_switches(mesh, step_cfg, {"sample_every": sc["sample_every"]}),
            status="failed" if result.failed_variants else "ok",
        )
        if cfg.plots:
            plots.plot_compare(result, rd.path / "comparison.png")
    if result.failed_variants:
        print(f"compare: failed variants {sorted(result.failed_variants)}", file=sys.stderr)
        return 3
    print(f"compare: ok, outputs in {cfg.output_dir}")
    return 0


def _cmd_converge(cfg: RunConfig) -> int:
    sc = cfg.scenario
    spec = kernel_from_name(sc["kernel"]["kind"], sc["kernel"].get("path"))
    lo, hi = sc["levels"]
    sweep = scenarios.convergence_sweep(
        levels=range(lo, hi + 1),
        T=sc["T"],
        cfl_ratio=sc["cfl_ratio"],
        kernel=spec,
        quad_order=sc["quad_order"],
        forcing_mode=sc["forcing"],
    )
    mesh = build_mesh(2 ** hi, sc["quad_order"])
    table = build_kernel_table(mesh, spec)
    failed = [r.level for r in sweep.levels if r.failed]
    with RunDirectory(cfg.output_dir, cfg.resolved) as rd:
        rd.write_convergence(sweep)
        rd.write_run_meta(
            table,
            default_switches(mesh, extra={
                "sweep": {
                    "levels": [r.level for r in sweep.levels],
                    "slope_E0": sweep.slope_e0,
                    "slope_E1": sweep.slope_e1,
                    "failed_levels": failed,
                },
                "cfl_ratio": sc["cfl_ratio"],
            }),
            status="failed" if failed else "ok",
        )
        if cfg.plots:
            plots.plot_convergence(sweep, rd.path / "convergence.png")
    if failed:
        print(f"converge: failed levels {failed}", file=sys.stderr)
        return 3
    print(
        f"converge: ok, slopes E0={sweep.slope_e0:.3f} E1={sweep.slope_e1:.3f}, "
        f"outputs in {cfg.output_dir}"
    )
    return 0


def _cmd_check(cfg: RunConfig) -> int:
    sc = cfg.scenario
    mesh, table = _build_problem(sc)
    state = _initial_state(sc, mesh, table, sc["variant"])
    verdict = diagnostics.classify_threshold(state, table)
    small = diagnostics.small_data_report(state, table)
    try:
        ebound = diagnostics.entropy_bound(state, table, c_param=sc["c_param"])
        ebound_payload = {
            "q_tilde": ebound.q_tilde,
            "feasible": ebound.feasible,
            "bound": ebound.bound,
            "w_min": ebound.w_min,
            "w_max": ebound.w_max,
        }
    except ValueError as exc:  # vacuous density: bound undefined
        ebound_payload = {"undefined": str(exc)}
    payload = {
        "threshold": {
            "e0_min": verdict.e0_min,
            "e0_max": verdict.e0_max,
            "argmin": verdict.argmin,
            "verdict": verdict.verdict,
        },
        "small_data": {
            "amplitude0": small.amplitude0,
            "u0_inf": small.u0_inf,
            "eta": small.eta,
            "epsilon_max": small.epsilon_max,
            "satisfied": small.satisfied,
            "witness": small.witness,
            "reason": small.reason,
        },
        "entropy_bound": ebound_payload,
    }
    with RunDirectory(cfg.output_dir, cfg.resolved) as rd:
        rd.write_json(payload, "check.json")
        rd.write_run_meta(table, default_switches(mesh))
        if cfg.plots:
            plots.plot_initial_state(state, table, rd.path / "initial_state.png")
    print(f"check: e0_min={verdict.e0_min:.6g} -> {verdict.verdict}")
    print(f"check: small-data satisfied={small.satisfied} (epsilon_max={small.epsilon_max:.6g})")
    if "bound" in ebound_payload:
        print(
            f"check: entropy bound feasible={ebound_payload['feasible']}"
            + (f", bound={ebound_payload['bound']:.6g}" if ebound_payload["feasible"] else "")
        )
    return 0


_RUNNERS = {
    "simulate": _cmd_simulate,
    "compare": _cmd_compare,
    "converge": _cmd_converge,
    "check": _cmd_check,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="flockfem",
        description="1D periodic FEM lab for alignment-model hydrodynamics",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config, args.command)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return _RUNNERS[cfg.command](cfg)
    except CFLViolation as exc:
        print(f"CFL violation (strict mode): {exc}", file=sys.stderr)
        return 4
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FlockFemError as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
