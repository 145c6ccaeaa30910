"""Power-level policies: the myopic constrained rule, finite-horizon
discounted dynamic programming, and a brute-force oracle for small models."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .domain import ACTIVITIES, Activity, PowerLevel, active_levels
from .markov import BatteryModel, JointState, PeriodSchedule, joint_index, joint_probs, joint_states
from .riskmodel import RiskInputs

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FiniteMdp:
    """Array form of a finite-horizon, period-dependent MDP.

    ``transitions[p, a]`` is the S x S kernel of action ``a`` in period ``p``
    and ``periods[t]`` selects the period used at step ``t``. States flagged
    in ``forced`` have identical rows and costs for every action.
    """

    costs: np.ndarray  # (S, A)
    transitions: np.ndarray  # (P, A, S, S)
    periods: np.ndarray  # (N,)
    gamma: float
    forced: np.ndarray | None = None  # (S,) bool

    def __post_init__(self) -> None:
        S, A = self.costs.shape
        if self.transitions.ndim != 4 or self.transitions.shape[1:] != (A, S, S):
            raise ValueError("transitions must have shape (periods, actions, S, S)")
        # 0 is allowed here so the first-step cost can be evaluated on its own
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must lie in [0, 1]")
        if len(self.periods) < 1:
            raise ValueError("horizon must be at least 1")
        if self.forced is None:
            object.__setattr__(self, "forced", np.zeros(S, dtype=bool))

    @property
    def n_states(self) -> int:
        return self.costs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.costs.shape[1]

    @property
    def horizon(self) -> int:
        return len(self.periods)


def backward_induction(mdp: FiniteMdp) -> tuple[np.ndarray, np.ndarray]:
    """Values (N+1, S) with V_N = 0 and argmin actions (N, S).

    Ties go to the lowest action index.
    """
    N, S = mdp.horizon, mdp.n_states
    V = np.zeros((N + 1, S))
    act = np.zeros((N, S), dtype=int)
    for t in range(N - 1, -1, -1):
        P = mdp.transitions[mdp.periods[t]]  # (A, S, S)
        q = mdp.costs + mdp.gamma * np.einsum("ast,t->sa", P, V[t + 1])
        act[t] = np.argmin(q, axis=1)
        V[t] = q[np.arange(S), act[t]]
    return V, act


def evaluate_actions(mdp: FiniteMdp, actions: np.ndarray, start: np.ndarray) -> float:
    """Expected discounted cost of action table (N, S) by forward propagation."""
    d = np.asarray(start, dtype=float)
    total = 0.0
    idx = np.arange(mdp.n_states)
    for t in range(mdp.horizon):
        a = actions[t]
        total += mdp.gamma**t * float(d @ mdp.costs[idx, a])
        d = d @ mdp.transitions[mdp.periods[t]][a, idx, :]
    return total


# -- structured problem --------------------------------------------------------


@dataclass(frozen=True)
class MdpProblem:
    schedule: PeriodSchedule
    battery: BatteryModel
    risk: RiskInputs
    omega: float = 0.17
    gamma: float = 0.99
    horizon: int = 24
    start_hour: float = 22.0
    step: float = 1.0

    def __post_init__(self) -> None:
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1 step")
        if not 0 <= self.omega <= 1:
            raise ValueError("omega must lie in [0, 1]")
        for u in self.risk.levels:
            self.battery.drain_of(u)

    @property
    def states(self) -> tuple[JointState, ...]:
        return joint_states(self.battery)

    @property
    def actions(self) -> tuple[PowerLevel, ...]:
        return active_levels(self.risk.levels)

    @property
    def sleep(self) -> PowerLevel:
        return self.risk.levels[0]

    def with_start(self, start_hour: float) -> "MdpProblem":
        return MdpProblem(self.schedule, self.battery, self.risk, self.omega, self.gamma, self.horizon, start_hour, self.step)

    def step_periods(self) -> np.ndarray:
        return np.array([self.schedule.period_of(self.start_hour + t * self.step) for t in range(self.horizon)])

    def compile(self) -> FiniteMdp:
        K, n = self.battery.n_states, len(ACTIVITIES)
        acts = self.actions
        empty = np.zeros(K * n, dtype=bool)
        empty[:n] = True  # battery state 1 comes first
        costs = np.empty((K * n, len(acts)))
        for j, x in enumerate(ACTIVITIES):
            forced_cost = self.risk.total_cost(x, self.sleep, self.omega)
            for a, u in enumerate(acts):
                costs[j::n, a] = self.risk.total_cost(x, u, self.omega)
                costs[j, a] = forced_cost
        trans = np.empty((self.schedule.n_periods, len(acts), K * n, K * n))
        for p, m in enumerate(self.schedule.matrices):
            sleep_rows = joint_probs(m.probs, self.battery, self.sleep)[empty]
            for a, u in enumerate(acts):
                P = joint_probs(m.probs, self.battery, u)
                P[empty] = sleep_rows
                trans[p, a] = P
        return FiniteMdp(costs, trans, self.step_periods(), self.gamma, empty)

    def start_distribution(self, battery_state: int | None = None, activity: Activity = Activity.SLEEPING) -> np.ndarray:
        d = np.zeros(self.battery.n_states * len(ACTIVITIES))
        d[joint_index(self.battery.n_states if battery_state is None else battery_state, activity)] = 1.0
        return d


# -- policies ------------------------------------------------------------------


@dataclass(frozen=True)
class Policy:
    """Decision table of level indices over joint states.

    ``decisions`` has one row when the policy is stationary (``index_by`` =
    "none"), one row per horizon step counted from ``start_hour`` ("step"),
    or one row per step-slot of the day ("clock").
    """

    kind: str
    decisions: np.ndarray  # (T, S) level indices
    n_battery: int
    index_by: str = "none"
    start_hour: float = 0.0
    step: float = 1.0
    values: np.ndarray | None = field(default=None, compare=False, repr=False)
    n_periods: int = 1

    def __post_init__(self) -> None:
        if self.index_by not in ("none", "step", "clock"):
            raise ValueError(f"unknown policy indexing {self.index_by!r}")
        self.decisions.setflags(write=False)

    def row(self, t: int, clock_hour: float | None = None) -> np.ndarray:
        if self.index_by == "none":
            return self.decisions[0]
        if self.index_by == "step":
            if not 0 <= t < len(self.decisions):
                raise IndexError(f"step {t} outside the policy horizon {len(self.decisions)}")
            return self.decisions[t]
        hour = self.start_hour + t * self.step if clock_hour is None else clock_hour
        slot = int(round((hour % 24.0) / self.step)) % len(self.decisions)
        return self.decisions[slot]

    def level_index(self, battery_state: int, activity: Activity, t: int = 0, clock_hour: float | None = None) -> int:
        return int(self.row(t, clock_hour)[joint_index(battery_state, activity)])

    def same_decisions(self, other: "Policy") -> bool:
        return self.decisions.shape == other.decisions.shape and bool(np.array_equal(self.decisions, other.decisions))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["period", "t", "battery_state", "activity", "action_index"])
        n = len(ACTIVITIES)
        if self.kind in ("myopic", "static") and self.index_by == "none":
            # stationary and battery-independent apart from forced sleep at state 1
            row = self.decisions[0]
            for x in ACTIVITIES:
                w.writerow(["*", "*", "*", x.label, int(row[joint_index(self.n_battery, x)])])
            return buf.getvalue()
        period_hours = 24.0 / self.n_periods
        records = []
        for t, row in enumerate(self.decisions):
            hour = (t * self.step) if self.index_by == "clock" else (self.start_hour + t * self.step)
            period = int((hour % 24.0) // period_hours)
            for s, level in enumerate(row):
                records.append((period, t, s // n + 1, s % n, int(level)))
        for period, t, k, j, level in sorted(records):
            w.writerow([period, t, k, ACTIVITIES[j].label, level])
        return buf.getvalue()


def _table_from_activity_map(levels_by_activity: dict[Activity, int], n_battery: int) -> np.ndarray:
    n = len(ACTIVITIES)
    row = np.empty(n_battery * n, dtype=int)
    for x, m in levels_by_activity.items():
        row[int(x)::n] = m
    row[:n] = 0  # forced sleep when empty
    return row[None, :]


def solve_myopic(risk: RiskInputs, zeta: float, n_battery: int = 30) -> Policy:
    """Cheapest active level meeting p_error <= zeta, per activity.

    If no level meets the bound the highest level is used.
    """
    if not 0 <= zeta <= 1:
        raise ValueError("zeta must lie in [0, 1]")
    acts = active_levels(risk.levels)
    choice = {}
    for x in ACTIVITIES:
        feasible = [u for u in acts if risk.p_error(x, u) <= zeta]
        if feasible:
            choice[x] = min(feasible, key=lambda u: (risk.energy_cost(u), u.index)).index
        else:
            log.warning("no level satisfies p_error <= %g for %s; using %s", zeta, x.label, acts[-1].name)
            choice[x] = acts[-1].index
    return Policy("myopic", _table_from_activity_map(choice, n_battery), n_battery)


def static_policy(level: PowerLevel, n_battery: int = 30) -> Policy:
    return Policy("static", _table_from_activity_map({x: level.index for x in ACTIVITIES}, n_battery), n_battery)


def _to_levels(problem: MdpProblem, actions: np.ndarray, forced: np.ndarray) -> np.ndarray:
    idx = np.array([u.index for u in problem.actions])
    out = idx[actions]
    out[..., forced] = problem.sleep.index
    return out


def solve_mdp(problem: MdpProblem) -> Policy:
    """Backward induction over the problem horizon from its start hour."""
    mdp = problem.compile()
    V, act = backward_induction(mdp)
    return Policy(
        "mdp",
        _to_levels(problem, act, mdp.forced),
        problem.battery.n_states,
        index_by="step",
        start_hour=problem.start_hour,
        step=problem.step,
        values=V,
        n_periods=problem.schedule.n_periods,
    )


def solve_receding(problem: MdpProblem) -> Policy:
    """First-step decisions of the horizon-N problem started at every slot of
    the day: exactly the receding-horizon controller, tabulated by clock."""
    slots = int(round(24.0 / problem.step))
    rows = [solve_mdp(problem.with_start(s * problem.step)).decisions[0] for s in range(slots)]
    return Policy(
        "mdp",
        np.stack(rows),
        problem.battery.n_states,
        index_by="clock",
        start_hour=0.0,
        step=problem.step,
        n_periods=problem.schedule.n_periods,
    )


def _policy_actions(policy: Policy, problem: MdpProblem) -> np.ndarray:
    """Map a policy onto the problem's action indices for each horizon step."""
    pos = {u.index: a for a, u in enumerate(problem.actions)}
    pos[problem.sleep.index] = 0  # forced states: every action is equivalent
    lut = np.zeros(max(pos) + 1, dtype=int)
    for m, a in pos.items():
        lut[m] = a
    rows = [policy.row(t, problem.start_hour + t * problem.step) for t in range(problem.horizon)]
    table = np.stack(rows)
    n = len(ACTIVITIES)
    voluntary_sleep = table[:, n:] == problem.sleep.index
    if voluntary_sleep.any():
        raise ValueError("policy chooses sleep mode in a non-empty battery state")
    return lut[table]


def evaluate_policy(policy: Policy, problem: MdpProblem, start: np.ndarray | None = None) -> float:
    """Exact expected discounted cost over the problem horizon."""
    mdp = problem.compile()
    if start is None:
        start = problem.start_distribution()
    return evaluate_actions(mdp, _policy_actions(policy, problem), start)


# -- brute-force oracle --------------------------------------------------------

MAX_STATES = 12
MAX_HORIZON = 4
MAX_ACTIONS = 3
MAX_POLICIES = 1 << 21


def exhaustive_optimal(
    problem: MdpProblem | FiniteMdp, start: np.ndarray | None = None, chunk: int = 1 << 14
) -> tuple[Policy | np.ndarray, float]:
    """Enumerate every deterministic time-dependent Markov policy.

    Each candidate is scored by exact forward propagation from ``start``
    (for a structured problem, by default full battery while sleeping).
    Returns the cheapest candidate (first in enumeration order on ties) and
    its value: a step-indexed Policy for an MdpProblem, the raw (N, S)
    action table for a FiniteMdp.
    """
    if isinstance(problem, MdpProblem):
        mdp = problem.compile()
        table, value = _enumerate(mdp, problem.start_distribution() if start is None else start, chunk)
        policy = Policy(
            "mdp",
            _to_levels(problem, table, mdp.forced),
            problem.battery.n_states,
            index_by="step",
            start_hour=problem.start_hour,
            step=problem.step,
            n_periods=problem.schedule.n_periods,
        )
        return policy, value
    if start is None:
        raise ValueError("a start distribution is required for an array-form MDP")
    return _enumerate(problem, start, chunk)


def _enumerate(mdp: FiniteMdp, start: np.ndarray, chunk: int) -> tuple[np.ndarray, float]:
    S, A, N = mdp.n_states, mdp.n_actions, mdp.horizon
    if S > MAX_STATES or N > MAX_HORIZON or A > MAX_ACTIONS:
        raise ValueError(
            f"instance too large for enumeration: {S} states, {A} actions, horizon {N} "
            f"(limits {MAX_STATES}, {MAX_ACTIONS}, {MAX_HORIZON})"
        )
    free = np.flatnonzero(~mdp.forced)
    digits = len(free) * N
    total = A**digits
    if total > MAX_POLICIES:
        raise ValueError(f"{total} candidate policies exceed the enumeration limit {MAX_POLICIES}")
    start = np.asarray(start, dtype=float)
    powers = A ** np.arange(digits - 1, -1, -1)
    best_val, best_code = np.inf, 0
    idx = np.arange(S)
    for lo in range(0, total, chunk):
        codes = np.arange(lo, min(total, lo + chunk))
        dig = (codes[:, None] // powers[None, :]) % A  # (B, digits)
        table = np.zeros((len(codes), N, S), dtype=int)
        table[:, :, free] = dig.reshape(len(codes), N, len(free))
        d = np.broadcast_to(start, (len(codes), S)).copy()
        val = np.zeros(len(codes))
        for t in range(N):
            a = table[:, t, :]  # (B, S)
            val += mdp.gamma**t * np.sum(d * mdp.costs[idx[None, :], a], axis=1)
            rows = mdp.transitions[mdp.periods[t]][a, idx[None, :], :]  # (B, S, S)
            d = np.einsum("bs,bst->bt", d, rows)
        i = int(np.argmin(val))
        if val[i] < best_val:
            best_val, best_code = float(val[i]), int(codes[i])
    dig = (best_code // powers) % A
    table = np.zeros((N, S), dtype=int)
    table[:, free] = dig.reshape(N, len(free))
    return table, best_val


def random_mdp(
    rng: np.random.Generator, n_states: int, n_actions: int, horizon: int, n_periods: int = 2, n_forced: int = 0, gamma: float | None = None
) -> FiniteMdp:
    """Random dense instance for oracle checks; the first ``n_forced`` states
    behave identically under every action."""
    costs = rng.random((n_states, n_actions))
    trans = rng.dirichlet(np.ones(n_states), size=(n_periods, n_actions, n_states))
    forced = np.zeros(n_states, dtype=bool)
    forced[:n_forced] = True
    costs[forced] = costs[forced, :1]
    trans[:, :, forced] = trans[:, :1, forced]
    periods = rng.integers(0, n_periods, size=horizon)
    g = float(rng.uniform(0.5, 1.0)) if gamma is None else gamma
    return FiniteMdp(costs, trans, periods, g, forced)


def all_static_policies(problem: MdpProblem) -> list[Policy]:
    return [static_policy(u, problem.battery.n_states) for u in problem.actions]
