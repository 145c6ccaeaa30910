"""Error, abnormality and misdetection probabilities and the cost terms
traded off by the power-level controllers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .domain import ACTIVITIES, DEFAULT_LEVELS, Activity, PowerLevel, validate_levels
from .vitals import ErrorModelTable


def gaussian_tail(mu: float, sigma: float, t: float) -> float:
    """P(Z > t) for Z ~ Normal(mu, sigma); a point mass when sigma is 0."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return 1.0 if mu > t else 0.0
    if t == -math.inf:
        return 1.0
    if t == math.inf:
        return 0.0
    return 0.5 * math.erfc((t - mu) / (sigma * math.sqrt(2.0)))


@dataclass(frozen=True)
class AbnormalityParams:
    m_a: float
    sigma_a: float
    theta: float

    def __post_init__(self) -> None:
        if not self.sigma_a > 0:
            raise ValueError("sigma_a must be positive")


def _default_abnormality() -> dict[Activity, AbnormalityParams]:
    # placeholder heart-rate-like scale: abnormal mass beyond 120 grows with exertion
    means = {
        Activity.SLEEPING: 105.0,
        Activity.SITTING: 120.0,
        Activity.WALKING: 125.0,
        Activity.JOGGING: 130.0,
        Activity.RUNNING: 135.0,
    }
    return {a: AbnormalityParams(m, 10.0, 120.0) for a, m in means.items()}


@dataclass(frozen=True)
class AbnormalityModel:
    params: Mapping[Activity, AbnormalityParams] = field(default_factory=_default_abnormality)

    def __getitem__(self, activity: Activity) -> AbnormalityParams:
        try:
            return self.params[activity]
        except KeyError:
            raise KeyError(f"abnormality model has no entry for {Activity(activity).label}") from None


@dataclass(frozen=True)
class RiskConfig:
    tau: float = 0.1
    zeta: float = 0.002
    omega: float = 0.17
    truncate: bool = False

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        for name in ("zeta", "omega"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name}={v}: probability out of range [0, 1]")

    def eta(self, p_abnormal: float) -> float:
        """Misdetection bound implied by zeta for a given abnormality probability."""
        return self.zeta * p_abnormal


def p_error(table: ErrorModelTable, x: Activity, u: PowerLevel, tau: float, truncate: bool = False) -> float:
    """Probability the measurement RMSE exceeds the tolerance tau.

    Sleep mode measures nothing, so the error is certain. With ``truncate``
    the Gaussian is conditioned on nonnegative error.
    """
    if u.is_sleep:
        return 1.0
    st = table.stats(x, u.index)
    tail = gaussian_tail(st.mu, st.sigma, tau)
    if truncate:
        mass = gaussian_tail(st.mu, st.sigma, 0.0)
        if tau < 0:
            return 1.0
        return tail / mass if mass > 0 else 0.0
    return tail


def p_abnormal(model: AbnormalityModel, x: Activity) -> float:
    p = model[x]
    return gaussian_tail(p.m_a, p.sigma_a, p.theta)


def p_misdetect(
    table: ErrorModelTable, model: AbnormalityModel, x: Activity, u: PowerLevel, tau: float, truncate: bool = False
) -> float:
    return p_abnormal(model, x) * p_error(table, x, u, tau, truncate)


def energy_cost(u: PowerLevel, levels: Sequence[PowerLevel] = DEFAULT_LEVELS, reference_mw: float | None = None) -> float:
    """Consumption divided by ``reference_mw``, by default the largest
    consumption among ``levels``."""
    top = max(v.consumption_mw for v in levels) if reference_mw is None else reference_mw
    if u.is_sleep or top == 0:
        return 0.0
    return u.consumption_mw / top


def total_cost(
    table: ErrorModelTable,
    model: AbnormalityModel,
    x: Activity,
    u: PowerLevel,
    tau: float,
    omega: float,
    levels: Sequence[PowerLevel] = DEFAULT_LEVELS,
    truncate: bool = False,
    reference_mw: float | None = None,
) -> float:
    if not 0 <= omega <= 1:
        raise ValueError("omega must lie in [0, 1]")
    return omega * p_misdetect(table, model, x, u, tau, truncate) + (1 - omega) * energy_cost(u, levels, reference_mw)


@dataclass(frozen=True)
class RiskInputs:
    """Everything the controllers need to price an (activity, level) pair."""

    table: ErrorModelTable
    abnormality: AbnormalityModel
    levels: tuple[PowerLevel, ...] = DEFAULT_LEVELS
    tau: float = 0.1
    truncate: bool = False
    # None normalises by the top level's draw; 1000 prices energy in watts
    energy_reference_mw: float | None = None

    def __post_init__(self) -> None:
        if self.energy_reference_mw is not None and not self.energy_reference_mw > 0:
            raise ValueError("energy_reference_mw must be positive")
        object.__setattr__(self, "levels", validate_levels(self.levels))
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        self.table.require(ACTIVITIES, [u.index for u in self.levels if not u.is_sleep])
        for a in ACTIVITIES:
            self.abnormality[a]

    def p_error(self, x: Activity, u: PowerLevel) -> float:
        return p_error(self.table, x, u, self.tau, self.truncate)

    def p_abnormal(self, x: Activity) -> float:
        return p_abnormal(self.abnormality, x)

    def p_misdetect(self, x: Activity, u: PowerLevel) -> float:
        return p_misdetect(self.table, self.abnormality, x, u, self.tau, self.truncate)

    def energy_cost(self, u: PowerLevel) -> float:
        return energy_cost(u, self.levels, self.energy_reference_mw)

    def total_cost(self, x: Activity, u: PowerLevel, omega: float) -> float:
        return total_cost(
            self.table, self.abnormality, x, u, self.tau, omega, self.levels, self.truncate, self.energy_reference_mw
        )
