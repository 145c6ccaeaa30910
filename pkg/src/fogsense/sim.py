"""Trace-driven observe-decide-act simulation and the comparison and sweep
experiments built on it."""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .domain import ACTIVITIES, Activity, PowerLevel, level_by_name
from .markov import ActivityTrace, BatteryModel, PeriodSchedule, estimate_activity_chain, sample_activity_trace
from .policy import MdpProblem, Policy, evaluate_policy, solve_mdp, solve_myopic, solve_receding, static_policy
from .riskmodel import RiskInputs

log = logging.getLogger(__name__)

HOURS_PER_WEEK = 168


@dataclass(frozen=True)
class PolicySpec:
    """Which controller to run: ``mdp`` (uses omega), ``myopic`` (zeta) or
    ``static`` (level name such as "U3")."""

    kind: str
    omega: float = 0.17
    zeta: float = 0.002
    level: str = "U1"
    gamma: float = 0.99
    horizon: int = 24
    mode: str = "precomputed"  # or "receding": re-solve every step

    def __post_init__(self) -> None:
        if self.kind not in ("mdp", "myopic", "static"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.mode not in ("precomputed", "receding"):
            raise ValueError(f"unknown MDP mode {self.mode!r}")

    @property
    def label(self) -> str:
        if self.kind == "mdp":
            return f"mdp(omega={self.omega:g})"
        if self.kind == "myopic":
            return f"myopic(zeta={self.zeta:g})"
        return f"static({self.level})"

    @property
    def param(self) -> str:
        return {"mdp": f"{self.omega:g}", "myopic": f"{self.zeta:g}", "static": self.level}[self.kind]

    @classmethod
    def parse(cls, text: str, **defaults) -> "PolicySpec":
        """``mdp``, ``mdp:0.3``, ``myopic:0.002`` or ``static:U1``."""
        kind, _, arg = text.partition(":")
        if kind == "mdp":
            return cls("mdp", **({**defaults, "omega": float(arg)} if arg else defaults))
        if kind == "myopic":
            return cls("myopic", **({**defaults, "zeta": float(arg)} if arg else defaults))
        if kind == "static":
            return cls("static", **{**defaults, "level": arg or defaults.get("level", "U1")})
        raise ValueError(f"cannot parse policy {text!r}")


@dataclass(frozen=True)
class Scenario:
    schedule: PeriodSchedule
    battery: BatteryModel
    risk: RiskInputs
    policy: PolicySpec
    duration: float = 24.0
    step: float = 1.0
    seeds: tuple[int, ...] = (0,)
    start_battery: int | None = None  # None: full
    start_activity: Activity = Activity.SLEEPING
    start_hour: float = 22.0
    trace: ActivityTrace | None = None  # None: sampled from the schedule per seed
    retrain_weekly: bool = False
    misclassification: float = 0.0

    def __post_init__(self) -> None:
        n = self.duration / self.step
        if self.step <= 0 or abs(n - round(n)) > 1e-9 or n < 1:
            raise ValueError("duration must be a positive multiple of step")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if not 0 <= self.misclassification <= 1:
            raise ValueError("misclassification must lie in [0, 1]")
        k = self.start_battery
        if k is not None and not 1 <= k <= self.battery.n_states:
            raise ValueError("start battery state out of range")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.step))

    def with_policy(self, policy: PolicySpec) -> "Scenario":
        return replace(self, policy=policy)


@dataclass(frozen=True)
class SimulationResult:
    hours: np.ndarray
    activity: np.ndarray  # Activity values
    action: np.ndarray  # level indices
    battery: np.ndarray  # state at decide time
    p_error: np.ndarray
    p_misdetect: np.ndarray
    energy_j: np.ndarray
    step: float
    recharges: int
    label: str = ""

    @property
    def total_energy_kj(self) -> float:
        return float(np.sum(self.energy_j)) / 1000.0

    @property
    def mean_p_error(self) -> float:
        return float(np.mean(self.p_error))

    @property
    def mean_p_misdetect(self) -> float:
        return float(np.mean(self.p_misdetect))

    @property
    def battery_life(self) -> float:
        """Hours until the battery is first found empty, else the duration."""
        empty = np.flatnonzero(self.battery == 1)
        return float(empty[0] * self.step) if empty.size else float(len(self.battery) * self.step)

    @property
    def duration(self) -> float:
        return len(self.hours) * self.step

    def summary(self) -> dict:
        return {
            "total_energy_kj": self.total_energy_kj,
            "mean_p_error": self.mean_p_error,
            "mean_p_misdetect": self.mean_p_misdetect,
            "battery_life_h": self.battery_life,
            "recharges": self.recharges,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["hour", "activity", "action", "battery", "p_error", "p_misdetect", "energy_j"])
        for i in range(len(self.hours)):
            w.writerow(
                [
                    repr(float(self.hours[i])),
                    ACTIVITIES[int(self.activity[i])].label,
                    f"U{int(self.action[i])}",
                    int(self.battery[i]),
                    repr(float(self.p_error[i])),
                    repr(float(self.p_misdetect[i])),
                    repr(float(self.energy_j[i])),
                ]
            )
        return buf.getvalue()


def step_energy_j(level: PowerLevel, step_hours: float) -> float:
    # mW * s = mJ
    return level.consumption_mw * step_hours * 3600.0 / 1000.0


# -- synthetic subjects --------------------------------------------------------

# day profile per 6 h period: night, morning, afternoon, evening
_DAY_PROFILE = np.array(
    [
        [0.90, 0.06, 0.02, 0.01, 0.01],
        [0.05, 0.70, 0.17, 0.05, 0.03],
        [0.05, 0.72, 0.15, 0.05, 0.03],
        [0.30, 0.60, 0.08, 0.01, 0.01],
    ]
)


@dataclass(frozen=True)
class SubjectModel:
    """Diurnal generator: each period mixes 'stay put' with a draw from the
    period's activity profile; the night period is pulled to Sleeping."""

    night_bias: float = 0.9
    persistence: float = 0.6
    jitter: float = 20.0  # Dirichlet concentration around the day profile

    def schedule(self, rng: np.random.Generator) -> PeriodSchedule:
        n = len(ACTIVITIES)
        mats = []
        for p, profile in enumerate(_DAY_PROFILE):
            target = rng.dirichlet(self.jitter * profile + 1e-3)
            if p == 0:
                sleep = np.zeros(n)
                sleep[0] = 1.0
                rows = self.night_bias * sleep[None, :] + (1 - self.night_bias) * target[None, :].repeat(n, 0)
            else:
                rows = self.persistence * np.eye(n) + (1 - self.persistence) * target[None, :]
            mats.append(rows / rows.sum(axis=1, keepdims=True))
        return PeriodSchedule.from_arrays(mats)


def default_schedule(model: SubjectModel = SubjectModel()) -> PeriodSchedule:
    """The generator's mean schedule (no per-subject jitter)."""
    n = len(ACTIVITIES)
    mats = []
    for p, profile in enumerate(_DAY_PROFILE):
        if p == 0:
            rows = model.night_bias * np.eye(n)[[0] * n] + (1 - model.night_bias) * profile[None, :].repeat(n, 0)
        else:
            rows = model.persistence * np.eye(n) + (1 - model.persistence) * profile[None, :]
        mats.append(rows / rows.sum(axis=1, keepdims=True))
    return PeriodSchedule.from_arrays(mats)


def generate_subject_traces(
    n_subjects: int, weeks: int, seed: int = 0, model: SubjectModel = SubjectModel(), start_hour: float = 0.0
) -> list[ActivityTrace]:
    """Hourly activity traces, one per synthetic subject."""
    if weeks < 1:
        raise ValueError("weeks must be at least 1")
    root = np.random.SeedSequence(seed)
    traces = []
    for child in root.spawn(n_subjects):
        rng = np.random.default_rng(child)
        sched = model.schedule(rng)
        traces.append(sample_activity_trace(sched, weeks * HOURS_PER_WEEK, start_hour, Activity.SLEEPING, rng))
    return traces


# -- running -------------------------------------------------------------------


def build_policy(spec: PolicySpec, scenario: Scenario, schedule: PeriodSchedule | None = None) -> Policy:
    K = scenario.battery.n_states
    if spec.kind == "myopic":
        return solve_myopic(scenario.risk, spec.zeta, K)
    if spec.kind == "static":
        return static_policy(level_by_name(scenario.risk.levels, spec.level), K)
    problem = mdp_problem(scenario, spec, schedule)
    return solve_receding(problem)


def mdp_problem(scenario: Scenario, spec: PolicySpec, schedule: PeriodSchedule | None = None, start_hour: float | None = None) -> MdpProblem:
    return MdpProblem(
        schedule or scenario.schedule,
        scenario.battery,
        scenario.risk,
        omega=spec.omega,
        gamma=spec.gamma,
        horizon=spec.horizon,
        start_hour=scenario.start_hour if start_hour is None else start_hour,
        step=scenario.step,
    )


class _Controller:
    """Decide phase: a policy table, optionally re-solved every step or
    retrained from the trailing week."""

    def __init__(self, scenario: Scenario, trace: ActivityTrace, policy: Policy | None = None):
        self.scenario = scenario
        self.trace = trace
        self.spec = scenario.policy
        self.schedule = scenario.schedule
        self.policy = policy if policy is not None else build_policy(self.spec, scenario)
        self.week = 0

    def decide(self, i: int, battery: int, activity: Activity, clock: float) -> int:
        sc, spec = self.scenario, self.spec
        if spec.kind == "mdp" and sc.retrain_weekly:
            week = int(i * sc.step // HOURS_PER_WEEK)
            if week != self.week:
                self.week = week
                lo = int(round((week - 1) * HOURS_PER_WEEK / sc.step))
                hi = int(round(week * HOURS_PER_WEEK / sc.step))
                past = ActivityTrace(self.trace.hours[lo:hi], self.trace.activities[lo:hi])
                self.schedule = estimate_activity_chain(past, self.schedule.n_periods, sc.step)
                if spec.mode == "precomputed":
                    self.policy = build_policy(spec, sc, self.schedule)
        if spec.kind == "mdp" and spec.mode == "receding":
            pol = solve_mdp(mdp_problem(sc, spec, self.schedule, start_hour=clock))
            return pol.level_index(battery, activity, 0)
        return self.policy.level_index(battery, activity, i, clock)


def run(scenario: Scenario, seed: int | None = None, policy: Policy | None = None) -> SimulationResult:
    """Simulate one seed; ``policy`` overrides the table built from the spec."""
    seed = scenario.seeds[0] if seed is None else seed
    ss = np.random.SeedSequence(seed)
    trace_rng, battery_rng, obs_rng = (np.random.default_rng(s) for s in ss.spawn(3))
    n = scenario.n_steps
    trace = scenario.trace
    if trace is None:
        trace = sample_activity_trace(
            scenario.schedule, scenario.duration, scenario.start_hour, scenario.start_activity, trace_rng, scenario.step
        )
    if len(trace) < n:
        raise ValueError(f"trace has {len(trace)} steps, scenario needs {n}")

    risk, bat = scenario.risk, scenario.battery
    levels = {u.index: u for u in risk.levels}
    sleep = risk.levels[0]
    ctl = _Controller(scenario, trace, policy)
    k = bat.n_states if scenario.start_battery is None else scenario.start_battery
    kernels: dict[tuple[int, Activity], np.ndarray] = {}
    p_abn = {x: risk.p_abnormal(x) for x in ACTIVITIES}
    p_err = {(x, u.index): risk.p_error(x, u) for x in ACTIVITIES for u in risk.levels}

    out = {name: np.empty(n) for name in ("hours", "p_error", "p_misdetect", "energy_j")}
    acts, actions, batt = np.empty(n, dtype=int), np.empty(n, dtype=int), np.empty(n, dtype=int)
    recharges, charging = 0, False
    draws = battery_rng.random(n)
    flips = obs_rng.random(n)
    wrong = obs_rng.integers(1, len(ACTIVITIES), size=n)
    for i in range(n):
        clock = scenario.start_hour + i * scenario.step
        x = trace.activities[i]
        observed = x
        if flips[i] < scenario.misclassification:
            observed = Activity((int(x) + int(wrong[i])) % len(ACTIVITIES))
        # decide; an empty battery forces sleep mode whatever the controller says
        m = sleep.index if k == 1 else ctl.decide(i, k, observed, clock)
        u = levels[m]
        pe = p_err[(x, m)]
        out["hours"][i] = clock
        out["p_error"][i] = pe
        out["p_misdetect"][i] = p_abn[x] * pe
        out["energy_j"][i] = step_energy_j(u, scenario.step)
        acts[i], actions[i], batt[i] = int(x), m, k
        # act: advance the battery
        key = (m, x)
        if key not in kernels:
            kernels[key] = np.cumsum(bat.kernel(m, x), axis=1)
        nxt = min(int(np.searchsorted(kernels[key][k - 1], draws[i], side="right")), bat.n_states - 1) + 1
        up = nxt > k
        if up and not charging:
            recharges += 1
        charging = up
        k = nxt
    return SimulationResult(
        out["hours"], acts, actions, batt, out["p_error"], out["p_misdetect"], out["energy_j"], scenario.step, recharges,
        scenario.policy.label,
    )


def run_all(scenario: Scenario) -> list[SimulationResult]:
    return [run(scenario, s) for s in scenario.seeds]


# -- comparisons ---------------------------------------------------------------


@dataclass(frozen=True)
class ComparisonRow:
    label: str
    kind: str
    total_energy_kj: float
    mean_p_error: float
    mean_p_misdetect: float
    battery_life_h: float
    expected_cost: float | None


@dataclass(frozen=True)
class Comparison:
    rows: tuple[ComparisonRow, ...]
    energy_ratio: float | None
    battery_life_ratio: float | None
    p_error_gap: float | None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["policy", "kind", "total_energy_kj", "mean_p_error", "mean_p_misdetect", "battery_life_h", "expected_cost"])
        for r in self.rows:
            w.writerow(
                [r.label, r.kind, repr(r.total_energy_kj), repr(r.mean_p_error), repr(r.mean_p_misdetect), repr(r.battery_life_h),
                 "" if r.expected_cost is None else repr(r.expected_cost)]
            )
        w.writerow([])
        w.writerow(["energy_ratio_mdp_over_myopic", "" if self.energy_ratio is None else repr(self.energy_ratio)])
        w.writerow(["battery_life_ratio_mdp_over_myopic", "" if self.battery_life_ratio is None else repr(self.battery_life_ratio)])
        w.writerow(["abs_mean_p_error_gap", "" if self.p_error_gap is None else repr(self.p_error_gap)])
        return buf.getvalue()


def _mean_over_seeds(scenario: Scenario, spec: PolicySpec) -> tuple[dict, Policy]:
    sc = scenario.with_policy(spec)
    policy = None if (spec.kind == "mdp" and (sc.retrain_weekly or spec.mode == "receding")) else build_policy(spec, sc)
    results = [run(sc, s, policy) for s in sc.seeds]
    keys = results[0].summary().keys()
    return {k: float(np.mean([r.summary()[k] for r in results])) for k in keys}, policy


def compare(scenario: Scenario, policies: dict[str, PolicySpec], model_cost_for: Sequence[str] = ()) -> Comparison:
    """Run every named policy on the same seeds.

    Ratios use the entries named ``mdp`` and ``myopic`` when both exist.
    ``model_cost_for`` names the policies whose exact expected model cost
    (over the MDP horizon from the scenario start) is reported.
    """
    rows = []
    by_name = {}
    for name, spec in policies.items():
        agg, policy = _mean_over_seeds(scenario, spec)
        cost = None
        if name in model_cost_for:
            mdp_spec = policies.get("mdp", spec)
            problem = mdp_problem(scenario, mdp_spec)
            if policy is None or policy.index_by == "clock":
                policy = solve_mdp(problem) if spec.kind == "mdp" else build_policy(spec, scenario)
            cost = evaluate_policy(policy, problem, problem.start_distribution(scenario.start_battery, scenario.start_activity))
        row = ComparisonRow(name, spec.kind, agg["total_energy_kj"], agg["mean_p_error"], agg["mean_p_misdetect"], agg["battery_life_h"], cost)
        rows.append(row)
        by_name[name] = row
    energy_ratio = life_ratio = gap = None
    if "mdp" in by_name and "myopic" in by_name:
        a, b = by_name["mdp"], by_name["myopic"]
        energy_ratio = a.total_energy_kj / b.total_energy_kj if b.total_energy_kj else None
        life_ratio = a.battery_life_h / b.battery_life_h if b.battery_life_h else None
        gap = abs(a.mean_p_error - b.mean_p_error)
    return Comparison(tuple(rows), energy_ratio, life_ratio, gap)


def bisect_parameter(
    fn: Callable[[float], float],
    target: float,
    lo: float,
    hi: float,
    *,
    scan: int = 9,
    xtol: float = 1e-3,
    max_iter: int = 30,
    log_scale: bool = False,
) -> tuple[float, float]:
    """Search x in [lo, hi] with fn(x) as close to ``target`` as possible.

    A coarse scan of ``scan`` points locates the sign change whose endpoints
    lie closest to the target; bisection then shrinks it until its width is
    below ``xtol`` (a ratio when ``log_scale``). ``fn`` need not be monotone
    or continuous. Returns (x, fn(x)) for the closest point evaluated.
    """
    if not lo < hi:
        raise ValueError("need lo < hi")
    if log_scale and lo <= 0:
        raise ValueError("log-scale search needs a positive lower bound")
    xs = np.geomspace(lo, hi, scan) if log_scale else np.linspace(lo, hi, scan)
    seen: list[tuple[float, float]] = []

    def f(x: float) -> float:
        v = fn(float(x)) - target
        seen.append((float(x), v))
        return v

    vals = [f(x) for x in xs]
    brackets = [i for i in range(scan - 1) if vals[i] == 0 or np.sign(vals[i]) != np.sign(vals[i + 1])]
    if brackets:
        i = min(brackets, key=lambda j: min(abs(vals[j]), abs(vals[j + 1])))
        a, b, fa = float(xs[i]), float(xs[i + 1]), vals[i]
        for _ in range(max_iter):
            if fa == 0 or (b / a - 1.0 if log_scale else b - a) <= xtol:
                break
            m = float(np.sqrt(a * b)) if log_scale else 0.5 * (a + b)
            fm = f(m)
            if fm == 0:
                break
            if np.sign(fm) == np.sign(fa):
                a, fa = m, fm
            else:
                b = m
    x, v = min(seen, key=lambda p: (abs(p[1]), p[0]))
    return x, v + target


# -- month-long sweep ----------------------------------------------------------


@dataclass(frozen=True)
class SweepSpec:
    zetas: tuple[float, ...] = (0.0002, 0.002, 0.045, 0.07, 0.1)
    omegas: tuple[float, ...] = (0.172, 0.176, 0.177, 0.188, 0.3, 0.4, 0.5, 0.6, 0.7)
    static_levels: tuple[str, ...] = ("U1", "U2", "U3", "U4", "U5")
    subjects: int = 14
    weeks: int = 4
    seed: int = 0

    def __post_init__(self) -> None:
        if not (self.zetas and self.omegas and self.static_levels):
            raise ValueError("sweep grids must be nonempty")
        if self.subjects < 1 or self.weeks < 1:
            raise ValueError("need at least one subject and one week")


@dataclass(frozen=True)
class SweepPoint:
    method: str
    param: str
    mean_energy_kj: float
    mean_p_error: float


def sweep_traces(spec: SweepSpec, model: SubjectModel = SubjectModel()) -> list[ActivityTrace]:
    """One training week followed by ``spec.weeks`` evaluated weeks per subject."""
    return generate_subject_traces(spec.subjects, spec.weeks + 1, spec.seed, model)


def subject_run(template: Scenario, policy: PolicySpec, trace: ActivityTrace, weeks: int) -> SimulationResult:
    """Month-style run: the MDP is trained on the first trace week and
    retrained weekly; the first week is not scored."""
    train = ActivityTrace(trace.hours[:HOURS_PER_WEEK], trace.activities[:HOURS_PER_WEEK])
    schedule = estimate_activity_chain(train, template.schedule.n_periods, template.step)
    rest = ActivityTrace(trace.hours[HOURS_PER_WEEK:] , trace.activities[HOURS_PER_WEEK:])
    sc = replace(
        template,
        schedule=schedule,
        policy=policy,
        trace=rest,
        duration=float(weeks * HOURS_PER_WEEK),
        start_hour=float(rest.hours[0] % 24.0),
        start_activity=rest.activities[0],
        retrain_weekly=True,
        battery=template.battery.with_charging(True),
    )
    # weekly retraining inside run() reads the trailing week of the evaluated trace
    return run(sc, sc.seeds[0])


def month_point(template: Scenario, policy: PolicySpec, traces: Sequence[ActivityTrace], weeks: int) -> SweepPoint:
    """Mean energy and mean p_error of one policy over every subject."""
    res = [subject_run(template, policy, tr, weeks) for tr in traces]
    return SweepPoint(
        policy.kind,
        policy.param,
        float(np.mean([r.total_energy_kj for r in res])),
        float(np.mean([r.mean_p_error for r in res])),
    )


def _sweep_point(args) -> SweepPoint:
    return month_point(*args)


def sweep(spec: SweepSpec, template: Scenario, workers: int = 1, traces: list[ActivityTrace] | None = None) -> list[SweepPoint]:
    traces = sweep_traces(spec) if traces is None else traces
    policies = (
        [PolicySpec("myopic", zeta=z) for z in spec.zetas]
        + [replace(template.policy, kind="mdp", omega=w) if template.policy.kind == "mdp" else PolicySpec("mdp", omega=w) for w in spec.omegas]
        + [PolicySpec("static", level=lv) for lv in spec.static_levels]
    )
    jobs = [(template, p, traces, spec.weeks) for p in policies]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            raw = list(pool.map(_sweep_point, jobs))
    else:
        raw = [_sweep_point(j) for j in jobs]
    return sorted(raw, key=lambda p: (p.mean_energy_kj, p.method, p.param))


def sweep_to_csv(points: Sequence[SweepPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "param", "mean_energy_kj", "mean_p_error"])
    for p in points:
        w.writerow([p.method, p.param, repr(p.mean_energy_kj), repr(p.mean_p_error)])
    return buf.getvalue()


# -- matched-error comparison ----------------------------------------------------


@dataclass(frozen=True)
class MatchedPair:
    """An anchor run and the counterpart found by bisection on the other
    method's parameter."""

    anchor: SweepPoint
    matched: SweepPoint
    varied: str  # "zeta" or "omega"
    tolerance: float

    @property
    def delta(self) -> float:
        return abs(self.anchor.mean_p_error - self.matched.mean_p_error)

    @property
    def within_tolerance(self) -> bool:
        return self.delta <= self.tolerance

    def _by_method(self, method: str) -> SweepPoint:
        return self.anchor if self.anchor.method == method else self.matched

    @property
    def energy_gap(self) -> float:
        """Relative energy saving of the MDP over myopic: 1 - E_mdp / E_myopic."""
        return 1.0 - self._by_method("mdp").mean_energy_kj / self._by_method("myopic").mean_energy_kj

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["role", "method", "param", "mean_energy_kj", "mean_p_error"])
        for role, p in (("anchor", self.anchor), ("matched", self.matched)):
            w.writerow([role, p.method, p.param, repr(p.mean_energy_kj), repr(p.mean_p_error)])
        w.writerow([])
        w.writerow(["abs_mean_p_error_gap", repr(self.delta)])
        w.writerow(["within_tolerance", str(self.within_tolerance).lower()])
        w.writerow(["energy_gap_mdp_vs_myopic", repr(self.energy_gap)])
        return buf.getvalue()


def match_error(
    template: Scenario,
    anchor: PolicySpec,
    traces: Sequence[ActivityTrace],
    weeks: int,
    tolerance: float = 0.005,
    bounds: tuple[float, float] = (0.0, 1.0),
) -> MatchedPair:
    """Bisection protocol: hold ``anchor`` fixed and search the other
    method's parameter (zeta for a myopic counterpart of an MDP anchor, omega
    for an MDP counterpart of a myopic anchor) for the mean p_error closest
    to the anchor's. ``tolerance`` only decides ``within_tolerance``."""
    if anchor.kind not in ("mdp", "myopic"):
        raise ValueError("the anchor must be an MDP or myopic policy")
    base = month_point(template, anchor, traces, weeks)
    seen: dict[object, SweepPoint] = {}

    if anchor.kind == "mdp":
        varied = "zeta"

        def spec_for(v: float) -> PolicySpec:
            return replace(anchor, kind="myopic", zeta=v)

        def key(v: float) -> object:
            # myopic error is a step function of zeta; reuse runs of identical tables
            return build_policy(spec_for(v), template).decisions.tobytes()

    else:
        varied = "omega"

        def spec_for(v: float) -> PolicySpec:
            return replace(anchor, kind="mdp", omega=v)

        def key(v: float) -> object:
            return v

    def point(v: float) -> SweepPoint:
        k = key(v)
        if k not in seen:
            seen[k] = replace(month_point(template, spec_for(v), traces, weeks), param=f"{v:g}")
        return seen[k]

    lo, hi = bounds
    if varied == "zeta":
        # thresholds span orders of magnitude
        best, _ = bisect_parameter(lambda v: point(v).mean_p_error, base.mean_p_error, max(lo, 1e-6), hi, log_scale=True, xtol=0.01)
    else:
        best, _ = bisect_parameter(lambda v: point(v).mean_p_error, base.mean_p_error, lo, hi, xtol=1e-3)
    return MatchedPair(base, point(best), varied, tolerance)
