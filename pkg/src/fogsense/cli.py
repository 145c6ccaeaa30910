"""Command line entry point: ``fogsense <subcommand> [flags]``.

Every subcommand reads one JSON config (the packaged example when
``--config`` is omitted); flags override config fields. Output goes to
``--out`` ("-" for stdout) or to ``<output_dir>/<subcommand>.<ext>``.
"""

from __future__ import annotations

import json
import logging
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import click
import numpy as np

from .config import Config, ConfigError, load_config, parse_config
from .domain import ACTIVITIES, Activity, level_by_name
from .markov import ActivityTrace, PeriodSchedule, estimate_activity_chain, sample_activity_trace
from .policy import MdpProblem, solve_mdp, solve_myopic, solve_receding, static_policy
from .sim import PolicySpec, compare, match_error, run, sweep, sweep_to_csv, sweep_traces
from .vitals import PpgFrame, SignalSpec, calibrate_error_model, extract_vitals, generate_ppg

log = logging.getLogger("fogsense")

EXAMPLE_CONFIG = "example_config.json"


class _State:
    def __init__(self, config: Config, base_dir: Path | None, seed_given: bool = False):
        self.config = config
        self.base_dir = base_dir
        self.seed_given = seed_given

    def table(self, override: str | None = None):
        cfg = self.config
        if override:
            cfg = cfg.model_copy(update={"error_model_csv": str(Path(override).resolve())})
        return cfg.error_table(self.base_dir)

    def schedule(self, path: str | None) -> PeriodSchedule:
        if path:
            return PeriodSchedule.from_json(Path(path).read_text())
        return self.config.period_schedule()


def _emit(text: str, out: str | None, default_name: str, cfg: Config) -> None:
    if out == "-":
        click.echo(text, nl=False)
        return
    path = Path(out) if out else Path(cfg.output_dir) / default_name
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
    click.echo(f"wrote {path}", err=True)


def _json(obj: object) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _fail(msg: str) -> None:
    raise click.ClickException(msg)


out_option = click.option("--out", "out", default=None, help="Output file; '-' writes to stdout.")


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None, help="JSON config (default: packaged example).")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
@click.pass_context
def main(ctx: click.Context, config_path: str | None, seed: int | None, verbose: bool) -> None:
    """Context-aware sensing-power control: calibration, training, policies and simulation."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if config_path is None:
            data = json.loads(resources.files("fogsense.data").joinpath(EXAMPLE_CONFIG).read_text())
            cfg, base = parse_config(data), None
        else:
            cfg, base = load_config(config_path), Path(config_path).resolve().parent
    except (ConfigError, OSError) as exc:
        _fail(f"config: {exc}")
    if seed is not None:
        cfg = cfg.model_copy(update={"seed": seed})
    ctx.obj = _State(cfg, base, seed is not None)


@main.command()
@click.option("--windows", type=int, default=None, help="Windows per (activity, level) pair.")
@out_option
@click.pass_obj
def calibrate(st: _State, windows: int | None, out: str | None) -> None:
    """Fit the error model from synthetic frames; writes the table CSV."""
    cfg = st.config
    try:
        plan = cfg.calibration_plan()
        if windows is not None:
            plan = replace(plan, windows=windows)
        table = calibrate_error_model(ACTIVITIES, cfg.power_levels(), plan, cfg.generator_config())
    except ValueError as exc:
        _fail(str(exc))
    _emit(table.to_csv(), out, "error_model.csv", cfg)


@main.command()
@click.option("--trace", "trace_path", type=click.Path(exists=True, dir_okay=False), default=None, help="Activity trace CSV (default: one synthetic week).")
@click.option("--periods", type=int, default=None, help="Periods per day (default: from the config schedule).")
@click.option("--smoothing", type=float, default=0.0, show_default=True)
@out_option
@click.pass_obj
def train(st: _State, trace_path: str | None, periods: int | None, smoothing: float, out: str | None) -> None:
    """Estimate the period-dependent activity chain; writes schedule JSON."""
    cfg = st.config
    sched = cfg.period_schedule()
    if trace_path:
        trace = ActivityTrace.from_csv(Path(trace_path).read_text())
    else:
        rng = np.random.default_rng(cfg.seed)
        trace = sample_activity_trace(sched, 168.0, 0.0, Activity.SLEEPING, rng, cfg.scenario.step)
    est = estimate_activity_chain(trace, periods or sched.n_periods, cfg.scenario.step, smoothing)
    _emit(est.to_json(), out, "schedule.json", cfg)


@main.command()
@click.option("--method", type=click.Choice(["mdp", "receding", "myopic", "static"]), default="mdp", show_default=True)
@click.option("--zeta", type=float, default=None)
@click.option("--omega", type=float, default=None)
@click.option("--level", default="U1", show_default=True, help="Level for --method static.")
@click.option("--start-hour", type=float, default=None)
@click.option("--schedule", "schedule_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--error-model", type=click.Path(exists=True, dir_okay=False), default=None)
@out_option
@click.pass_obj
def solve(st: _State, method, zeta, omega, level, start_hour, schedule_path, error_model, out) -> None:
    """Compute a policy; writes the policy CSV."""
    cfg = st.config
    r = cfg.risk
    try:
        risk = cfg.risk_inputs(st.table(error_model))
        K = cfg.battery.n_states
        if method == "myopic":
            policy = solve_myopic(risk, r.zeta if zeta is None else zeta, K)
        elif method == "static":
            policy = static_policy(level_by_name(risk.levels, level), K)
        else:
            problem = MdpProblem(
                st.schedule(schedule_path),
                cfg.battery_model(cfg.scenario.charging),
                risk,
                r.omega if omega is None else omega,
                r.gamma,
                r.horizon,
                cfg.scenario.start_hour if start_hour is None else start_hour,
                cfg.scenario.step,
            )
            policy = solve_mdp(problem) if method == "mdp" else solve_receding(problem)
    except (ValueError, KeyError) as exc:
        _fail(str(exc))
    _emit(policy.to_csv(), out, "policy.csv", cfg)


def _charging_flag(value: str | None) -> bool | None:
    return None if value is None else value == "on"


@main.command()
@click.option("--policy", "policy_text", default=None, help="mdp[:omega], myopic[:zeta] or static:U<i>.")
@click.option("--hours", type=float, default=None, help="Duration in hours.")
@click.option("--charging", type=click.Choice(["on", "off"]), default=None)
@click.option("--start-hour", type=float, default=None)
@click.option("--trace", "trace_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--summary", "summary_path", default=None, help="Also write the aggregate metrics as JSON.")
@out_option
@click.pass_obj
def simulate(st: _State, policy_text, hours, charging, start_hour, trace_path, summary_path, out) -> None:
    """Run one simulation (first configured seed, or --seed); writes the time-series CSV."""
    cfg = st.config
    try:
        sc = cfg.scenario_for(st.table(), cfg.policy_spec(policy_text), _charging_flag(charging))
        updates = {}
        if hours is not None:
            updates["duration"] = hours
        if start_hour is not None:
            updates["start_hour"] = start_hour
        if trace_path:
            updates["trace"] = ActivityTrace.from_csv(Path(trace_path).read_text())
        sc = replace(sc, **updates)
        result = run(sc, cfg.seed if st.seed_given else sc.seeds[0])
    except ValueError as exc:
        _fail(str(exc))
    _emit(result.to_csv(), out, "simulation.csv", cfg)
    summary = _json({k: v for k, v in result.summary().items()})
    if summary_path:
        _emit(summary, summary_path, "summary.json", cfg)
    click.echo(summary.replace("\n", " ").strip(), err=True)


@main.command(name="compare")
@click.option("--hours", type=float, default=None)
@click.option("--charging", type=click.Choice(["on", "off"]), default=None)
@click.option("--omega", type=float, default=None)
@click.option("--zeta", type=float, default=None)
@out_option
@click.pass_obj
def compare_cmd(st: _State, hours, charging, omega, zeta, out) -> None:
    """MDP, myopic and every static level on shared seeds; writes the comparison CSV."""
    cfg = st.config
    r = cfg.risk
    mdp = cfg.policy_spec("mdp")
    mdp = replace(mdp, omega=r.omega if omega is None else omega)
    myo = replace(cfg.policy_spec("myopic"), zeta=r.zeta if zeta is None else zeta)
    policies = {"mdp": mdp, "myopic": myo}
    for u in cfg.power_levels()[1:]:
        policies[f"static_{u.name}"] = PolicySpec("static", level=u.name)
    sc = cfg.scenario_for(st.table(), mdp, _charging_flag(charging))
    if hours is not None:
        sc = replace(sc, duration=hours)
    table = compare(sc, policies, model_cost_for=("mdp", "myopic"))
    _emit(table.to_csv(), out, "comparison.csv", cfg)


@main.command(name="sweep")
@click.option("--subjects", type=int, default=None)
@click.option("--weeks", type=int, default=None)
@click.option("--workers", type=int, default=None)
@click.option("--match-out", default=None, help="Also run the matched-error protocol against myopic at the config zeta and write it here.")
@out_option
@click.pass_obj
def sweep_cmd(st: _State, subjects, weeks, workers, match_out, out) -> None:
    """Month-long Pareto sweep over the zeta, omega and static grids; writes the Pareto CSV."""
    cfg = st.config
    spec = cfg.sweep_spec()
    spec = replace(spec, subjects=subjects or spec.subjects, weeks=weeks or spec.weeks)
    template = cfg.scenario_for(st.table(), cfg.policy_spec("mdp"), charging=True)
    traces = sweep_traces(spec, cfg.subject_model())
    points = sweep(spec, template, workers or cfg.sweep.workers, traces)
    _emit(sweep_to_csv(points), out, "sweep.csv", cfg)
    if match_out:
        pair = match_error(template, cfg.policy_spec("myopic"), traces, spec.weeks, cfg.sweep.match_tolerance)
        _emit(pair.to_csv(), match_out, "matched.csv", cfg)


@main.command()
@click.option("--frame", "frame_path", type=click.Path(exists=True, dir_okay=False), default=None, help="Frame CSV t,red,infrared (default: a synthetic frame).")
@click.option("--activity", default="Sitting", show_default=True, help="Activity for the synthetic frame.")
@click.option("--level", default="U3", show_default=True, help="Power level for the synthetic frame.")
@click.option("--write-frame", default=None, help="Also save the frame that was analysed.")
@out_option
@click.pass_obj
def vitals(st: _State, frame_path, activity, level, write_frame, out) -> None:
    """Extract heart rate, respiration rate and SpO2 from a frame; writes JSON."""
    cfg = st.config
    gen = cfg.generator_config()
    try:
        if frame_path:
            frame = PpgFrame.from_csv(Path(frame_path).read_text())
        else:
            spec = SignalSpec(72.0, 15.0, 97.0, Activity.from_label(activity), level_by_name(cfg.power_levels(), level), 60.0, cfg.seed)
            frame = generate_ppg(spec, gen)
        signs = extract_vitals(frame, gen.coeffs)
    except ValueError as exc:
        _fail(str(exc))
    if write_frame:
        _emit(frame.to_csv(), write_frame, "frame.csv", cfg)
    _emit(_json(signs.to_dict()), out, "vitals.json", cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
