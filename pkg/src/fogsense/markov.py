"""Battery and activity Markov chains and their joint product chain."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .domain import ACTIVITIES, Activity, PowerLevel

ROW_TOL = 1e-9


@dataclass(frozen=True)
class TransitionMatrix:
    states: tuple
    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=float)
        n = len(self.states)
        if probs.shape != (n, n):
            raise ValueError(f"expected a {n}x{n} matrix, got {probs.shape}")
        if np.any(probs < -ROW_TOL) or np.any(probs > 1 + ROW_TOL):
            raise ValueError("transition probabilities must lie in [0, 1]")
        # absorb round-off so downstream code sees exact bounds
        probs = np.clip(probs, 0.0, 1.0)
        bad = np.flatnonzero(np.abs(probs.sum(axis=1) - 1.0) > ROW_TOL)
        if bad.size:
            raise ValueError(f"row {self.states[bad[0]]!r} does not sum to 1")
        probs.setflags(write=False)
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "probs", probs)

    def index(self, state: Hashable) -> int:
        try:
            return self.states.index(state)
        except ValueError:
            raise KeyError(f"{state!r} is not a state of this chain") from None

    def row(self, state: Hashable) -> np.ndarray:
        return self.probs[self.index(state)]

    def __getitem__(self, key: tuple) -> float:
        src, dst = key
        return float(self.probs[self.index(src), self.index(dst)])


def _as_rng(rng: int | np.random.Generator | None) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def sample_next(state: Hashable, matrix: TransitionMatrix, rng: int | np.random.Generator | None = None):
    """Draw the successor of ``state``; pass a Generator to continue a stream."""
    row = matrix.row(state)
    u = _as_rng(rng).random()
    # inverse CDF; clip guards the last bin against round-off in the cumsum
    idx = int(np.searchsorted(np.cumsum(row), u, side="right"))
    idx = min(idx, len(row) - 1)
    while row[idx] == 0:  # never land on a zero-probability state
        idx -= 1
    return matrix.states[idx]


# -- battery -------------------------------------------------------------------


def _default_drain() -> dict[int, int]:
    return {m: m for m in range(6)}


@dataclass(frozen=True)
class BatteryModel:
    """Quantised battery with K states; 1 is empty, K is full.

    Each step at level U drains ``drain[U.index]`` states. When charging is
    enabled and the user is in one of ``charge_activities``, the battery
    instead gains ``charge_rate`` states with probability ``charge_prob``.
    """

    n_states: int = 30
    drain: Mapping[int, int] = field(default_factory=_default_drain)
    charge_rate: int = 2
    charge_activities: frozenset = frozenset({Activity.SLEEPING, Activity.SITTING})
    charge_prob: float = 1.0
    charging: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "drain", dict(sorted((int(k), int(v)) for k, v in self.drain.items())))
        object.__setattr__(self, "charge_activities", frozenset(Activity(a) for a in self.charge_activities))
        K = self.n_states
        if K < 2:
            raise ValueError("battery needs at least 2 states")
        if self.drain.get(0) != 0:
            raise ValueError("sleep level U0 must not drain the battery")
        active = [(m, d) for m, d in self.drain.items() if m >= 1]
        for m, d in active:
            if not 1 <= d <= K:
                raise ValueError(f"drain of U{m} must lie in [1, {K}]")
        for (m0, d0), (m1, d1) in zip(active, active[1:]):
            if d1 <= d0:
                raise ValueError(f"drain must increase strictly with level (U{m0}={d0}, U{m1}={d1})")
        if self.charge_rate < 0:
            raise ValueError("charge_rate must be nonnegative")
        if not 0 <= self.charge_prob <= 1:
            raise ValueError("charge_prob must lie in [0, 1]")

    @property
    def states(self) -> tuple[int, ...]:
        return tuple(range(1, self.n_states + 1))

    def drain_of(self, u: PowerLevel | int) -> int:
        m = u.index if isinstance(u, PowerLevel) else int(u)
        try:
            return self.drain[m]
        except KeyError:
            raise KeyError(f"battery model has no drain rate for U{m}") from None

    def kernel(self, u: PowerLevel | int, activity: Activity) -> np.ndarray:
        """K x K transition probabilities (row k-1 holds state k)."""
        K = self.n_states
        d = self.drain_of(u)
        k = np.arange(1, K + 1)
        q = np.zeros((K, K))
        drained = np.maximum(k - d, 1)
        charge = self.charging and activity in self.charge_activities
        p = self.charge_prob if charge else 0.0
        q[k - 1, drained - 1] += 1.0 - p
        if p > 0:
            q[k - 1, np.minimum(k + self.charge_rate, K) - 1] += p
        return q

    def for_step(self, step_hours: float) -> "BatteryModel":
        """Rescale per-hour drain and charge rates to a ``step_hours`` step.

        The scaled rates must stay whole numbers of battery states.
        """
        def scaled(rate: int, name: str) -> int:
            v = rate * step_hours
            if abs(v - round(v)) > 1e-9:
                raise ValueError(f"{name} of {rate} states/h is not a whole number of states per {step_hours} h step")
            return int(round(v))

        drain = {m: scaled(d, f"drain of U{m}") for m, d in self.drain.items()}
        rate = scaled(self.charge_rate, "charge rate")
        return BatteryModel(self.n_states, drain, rate, self.charge_activities, self.charge_prob, self.charging)

    def with_charging(self, charging: bool) -> "BatteryModel":
        return BatteryModel(self.n_states, self.drain, self.charge_rate, self.charge_activities, self.charge_prob, charging)

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "drain": {f"U{m}": d for m, d in self.drain.items()},
            "charge_rate": self.charge_rate,
            "charge_activities": [a.label for a in sorted(self.charge_activities)],
            "charge_prob": self.charge_prob,
            "charging": self.charging,
        }


def battery_transitions(model: BatteryModel, u: PowerLevel, activity: Activity) -> TransitionMatrix:
    return TransitionMatrix(model.states, model.kernel(u, activity))


# -- activity chains -----------------------------------------------------------


@dataclass(frozen=True)
class PeriodSchedule:
    """One activity chain per equal slice of the day."""

    matrices: tuple[TransitionMatrix, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "matrices", tuple(self.matrices))
        n = len(self.matrices)
        if n == 0 or 24 % n:
            raise ValueError(f"number of periods must divide 24, got {n}")
        for m in self.matrices:
            if m.states != ACTIVITIES:
                raise ValueError("every period chain must use the five activities in canonical order")

    @property
    def n_periods(self) -> int:
        return len(self.matrices)

    @property
    def period_hours(self) -> float:
        return 24.0 / self.n_periods

    def period_of(self, clock_hour: float) -> int:
        """0-based period containing the wall-clock hour (mod 24)."""
        return int((clock_hour % 24.0) // self.period_hours) % self.n_periods

    def matrix_at(self, clock_hour: float) -> TransitionMatrix:
        return self.matrices[self.period_of(clock_hour)]

    @property
    def stacked(self) -> np.ndarray:
        return np.stack([m.probs for m in self.matrices])

    @classmethod
    def from_arrays(cls, arrays: Iterable) -> "PeriodSchedule":
        return cls(tuple(TransitionMatrix(ACTIVITIES, np.asarray(a, dtype=float)) for a in arrays))

    def to_json(self) -> str:
        doc = {
            "n_periods": self.n_periods,
            "period_hours": self.period_hours,
            "states": [a.label for a in ACTIVITIES],
            "matrices": [m.probs.tolist() for m in self.matrices],
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "PeriodSchedule":
        doc = json.loads(text)
        if doc.get("states", [a.label for a in ACTIVITIES]) != [a.label for a in ACTIVITIES]:
            raise ValueError("schedule states must be the five canonical activities in order")
        sched = cls.from_arrays(doc["matrices"])
        if "n_periods" in doc and doc["n_periods"] != sched.n_periods:
            raise ValueError("n_periods does not match the number of matrices")
        return sched


@dataclass(frozen=True)
class ActivityTrace:
    hours: np.ndarray
    activities: tuple[Activity, ...]

    def __post_init__(self) -> None:
        hours = np.asarray(self.hours, dtype=float)
        if len(hours) != len(self.activities):
            raise ValueError("timestamps and activities differ in length")
        object.__setattr__(self, "hours", hours)
        object.__setattr__(self, "activities", tuple(Activity(a) for a in self.activities))

    def __len__(self) -> int:
        return len(self.activities)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["timestamp_hours", "activity"])
        for h, a in zip(self.hours, self.activities):
            w.writerow([repr(float(h)), a.label])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ActivityTrace":
        rows = csv.DictReader(io.StringIO(text))
        if rows.fieldnames != ["timestamp_hours", "activity"]:
            raise ValueError(f"unexpected trace header {rows.fieldnames}")
        hours, acts = [], []
        for i, row in enumerate(rows, start=2):
            try:
                hours.append(float(row["timestamp_hours"]))
                acts.append(Activity.from_label(row["activity"]))
            except ValueError as exc:
                raise ValueError(f"line {i}: {exc}") from None
        return cls(np.array(hours), tuple(acts))


def estimate_activity_chain(
    trace: ActivityTrace, n_periods: int, step: float = 1.0, smoothing: float = 0.0
) -> PeriodSchedule:
    """Count transitions per period of their source timestamp.

    Rows without observations become uniform; ``smoothing`` adds a pseudo-count
    to every cell (1 gives Laplace smoothing).
    """
    if len(trace) == 0:
        raise ValueError("empty activity trace")
    if n_periods <= 0 or 24 % n_periods:
        raise ValueError(f"number of periods must divide 24, got {n_periods}")
    gaps = np.diff(trace.hours)
    if np.any(gaps <= 0):
        raise ValueError("trace timestamps must be strictly increasing")
    if np.any(np.abs(gaps - step) > 1e-9 * max(1.0, step)):
        raise ValueError(f"trace timestamps must advance by exactly {step} h")
    n = len(ACTIVITIES)
    counts = np.full((n_periods, n, n), float(smoothing))
    period_hours = 24.0 / n_periods
    src = np.array([int(a) for a in trace.activities[:-1]], dtype=int)
    dst = np.array([int(a) for a in trace.activities[1:]], dtype=int)
    per = ((trace.hours[:-1] % 24.0) // period_hours).astype(int) % n_periods
    np.add.at(counts, (per, src, dst), 1.0)
    totals = counts.sum(axis=2, keepdims=True)
    probs = np.where(totals > 0, counts / np.where(totals > 0, totals, 1.0), 1.0 / n)
    return PeriodSchedule.from_arrays(probs)


def sample_activity_trace(
    schedule: PeriodSchedule,
    hours: int,
    start_hour: float = 0.0,
    initial: Activity = Activity.SLEEPING,
    rng: int | np.random.Generator | None = None,
    step: float = 1.0,
) -> ActivityTrace:
    """Sample ``hours / step`` states, the first being ``initial`` at ``start_hour``."""
    rng = _as_rng(rng)
    n = int(round(hours / step))
    stacked = np.cumsum(schedule.stacked, axis=2)
    acts = np.empty(n, dtype=int)
    cur = int(initial)
    u = rng.random(n)
    for i in range(n):
        acts[i] = cur
        clock = start_hour + i * step
        cdf = stacked[schedule.period_of(clock), cur]
        cur = min(int(np.searchsorted(cdf, u[i], side="right")), len(ACTIVITIES) - 1)
    return ActivityTrace(start_hour + step * np.arange(n), tuple(Activity(a) for a in acts))


# -- joint chain ---------------------------------------------------------------


@dataclass(frozen=True, order=True)
class JointState:
    battery: int
    activity: Activity


def joint_states(battery: BatteryModel) -> tuple[JointState, ...]:
    """Battery-major ordering: index = (battery - 1) * 5 + activity."""
    return tuple(JointState(k, a) for k in battery.states for a in ACTIVITIES)


def joint_index(battery_state: int, activity: Activity) -> int:
    return (battery_state - 1) * len(ACTIVITIES) + int(activity)


def joint_probs(activity_probs: np.ndarray, battery: BatteryModel, u: PowerLevel | int) -> np.ndarray:
    """P[(k,j) -> (k',j')] = q(k'|k,u,j) * p(j'|j) as a dense array."""
    K, n = battery.n_states, len(ACTIVITIES)
    q = np.stack([battery.kernel(u, a) for a in ACTIVITIES])  # (j, k, k')
    p4 = np.einsum("jkl,jm->kjlm", q, activity_probs)
    return p4.reshape(K * n, K * n)


def joint_transition(schedule: PeriodSchedule, period: int, battery: BatteryModel, u: PowerLevel) -> TransitionMatrix:
    """Joint chain for 0-based ``period`` under action ``u``."""
    if not 0 <= period < schedule.n_periods:
        raise ValueError(f"period {period} outside 0..{schedule.n_periods - 1}")
    return TransitionMatrix(joint_states(battery), joint_probs(schedule.matrices[period].probs, battery, u))


def random_schedule(rng: np.random.Generator, n_periods: int = 4, concentration: float = 1.0) -> PeriodSchedule:
    """Dirichlet-distributed rows; a test and sweep helper."""
    n = len(ACTIVITIES)
    return PeriodSchedule.from_arrays(rng.dirichlet(np.full(n, concentration), size=(n_periods, n)))


def matrix_linf(a: Sequence[TransitionMatrix] | PeriodSchedule, b: Sequence[TransitionMatrix] | PeriodSchedule) -> float:
    sa = a.stacked if isinstance(a, PeriodSchedule) else np.stack([m.probs for m in a])
    sb = b.stacked if isinstance(b, PeriodSchedule) else np.stack([m.probs for m in b])
    return float(np.max(np.abs(sa - sb)))
