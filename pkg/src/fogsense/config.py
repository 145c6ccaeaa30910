"""JSON configuration: schema, defaults and conversion to library objects.

Every section is optional except the power-level table. Omitted fields take
the defaults documented in ``docs/configuration.md``; unknown keys are
rejected and every error names the JSON path of the offending field.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .domain import ACTIVITIES, Activity, PowerLevel, validate_levels
from .markov import BatteryModel, PeriodSchedule
from .riskmodel import AbnormalityModel, AbnormalityParams, RiskConfig, RiskInputs, _default_abnormality
from .sim import PolicySpec, Scenario, SubjectModel, SweepSpec, default_schedule
from .vitals import CalibrationPlan, ErrorModelTable, GeneratorConfig, NoiseModel, SpO2Coefficients

DEFAULT_TABLE = "default_error_model.csv"


class ConfigError(ValueError):
    """Raised for any schema or invariant violation; the message starts with
    the JSON path."""


def _probability(v: float) -> float:
    if not 0 <= v <= 1:
        raise ValueError("probability out of range [0, 1]")
    return v


def _activity_key(label: str) -> Activity:
    return Activity.from_label(label)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class LevelCfg(_Section):
    current_ma: float = Field(ge=0)
    consumption_mw: float = Field(ge=0)


class BatteryCfg(_Section):
    n_states: int = 30
    drain: dict[str, int] = Field(default_factory=lambda: {f"U{m}": m for m in range(6)})
    charge_rate: int = 3
    charge_activities: list[str] = Field(default_factory=lambda: ["Sleeping", "Sitting"])
    charge_prob: float = 1.0

    _prob = field_validator("charge_prob")(_probability)

    @field_validator("charge_activities")
    @classmethod
    def _labels(cls, v: list[str]) -> list[str]:
        for label in v:
            _activity_key(label)
        return v


class RiskCfg(_Section):
    tau: float = RiskConfig().tau
    zeta: float = RiskConfig().zeta
    omega: float = RiskConfig().omega
    gamma: float = 0.99
    horizon: int = 24
    truncate: bool = False
    energy_reference_mw: Optional[float] = 1000.0

    _prob = field_validator("zeta", "omega")(_probability)

    @field_validator("tau")
    @classmethod
    def _tau(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("tau must be positive")
        return v

    @field_validator("gamma")
    @classmethod
    def _gamma(cls, v: float) -> float:
        if not 0 < v <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        return v

    @field_validator("horizon")
    @classmethod
    def _horizon(cls, v: int) -> int:
        if v < 1:
            raise ValueError("horizon must be at least 1 step")
        return v


class AbnormalCfg(_Section):
    m_a: float
    sigma_a: float = Field(gt=0)
    theta: float


def _default_abnormal_cfg() -> dict[str, AbnormalCfg]:
    return {a.label: AbnormalCfg(m_a=p.m_a, sigma_a=p.sigma_a, theta=p.theta) for a, p in _default_abnormality().items()}


class NoiseCfg(_Section):
    motion: dict[str, float] = Field(default_factory=lambda: {a.label: m for a, m in NoiseModel().motion.items()})
    motion_gain: float = NoiseModel().motion_gain
    ambient_gain: float = NoiseModel().ambient_gain
    current_exponent: float = NoiseModel().current_exponent
    scale: float = 1.0


class SpO2Cfg(_Section):
    alpha: float = SpO2Coefficients().alpha
    beta: float = SpO2Coefficients().beta
    gamma: float = SpO2Coefficients().gamma


class GeneratorCfg(_Section):
    sample_rate: float = 50.0
    dc_ir: float = 1.0
    dc_red: float = 0.8
    perfusion: float = 0.02
    resp_gain: float = 0.4
    spo2: SpO2Cfg = SpO2Cfg()
    noise: NoiseCfg = NoiseCfg()


class CalibrationCfg(_Section):
    windows: int = 20
    window_seconds: float = 60.0
    heart_rate: tuple[float, float] = (50.0, 120.0)
    respiration_rate: tuple[float, float] = (10.0, 25.0)
    spo2: tuple[float, float] = (92.0, 99.0)
    seed: int = 0


class SubjectsCfg(_Section):
    night_bias: float = 0.9
    persistence: float = 0.6
    jitter: float = 20.0

    _prob = field_validator("night_bias", "persistence")(_probability)


class ScenarioCfg(_Section):
    policy: str = "mdp"
    duration: float = 24.0
    step: float = 1.0
    seeds: list[int] = Field(default_factory=lambda: list(range(10)))
    start_hour: float = 22.0
    start_battery: Optional[int] = None
    start_activity: str = "Sleeping"
    charging: bool = False
    misclassification: float = 0.0
    mdp_mode: Literal["precomputed", "receding"] = "precomputed"

    _prob = field_validator("misclassification")(_probability)

    @field_validator("start_activity")
    @classmethod
    def _label(cls, v: str) -> str:
        _activity_key(v)
        return v

    @field_validator("seeds")
    @classmethod
    def _seeds(cls, v: list[int]) -> list[int]:
        if not v:
            raise ValueError("seeds must be nonempty")
        return v


class SweepCfg(_Section):
    zetas: list[float] = Field(default_factory=lambda: list(SweepSpec().zetas))
    omegas: list[float] = Field(default_factory=lambda: list(SweepSpec().omegas))
    static_levels: list[str] = Field(default_factory=lambda: list(SweepSpec().static_levels))
    subjects: int = 14
    weeks: int = 4
    workers: int = 1
    match_tolerance: float = 0.005

    @field_validator("zetas", "omegas")
    @classmethod
    def _grid(cls, v: list[float]) -> list[float]:
        if not v:
            raise ValueError("grid must be nonempty")
        for p in v:
            _probability(p)
        return v


class Config(_Section):
    levels: list[LevelCfg]
    battery: BatteryCfg = BatteryCfg()
    risk: RiskCfg = RiskCfg()
    abnormality: dict[str, AbnormalCfg] = Field(default_factory=_default_abnormal_cfg)
    error_model_csv: Optional[str] = None
    generator: GeneratorCfg = GeneratorCfg()
    calibration: CalibrationCfg = CalibrationCfg()
    schedule: Optional[list[list[list[float]]]] = None
    subjects: SubjectsCfg = SubjectsCfg()
    scenario: ScenarioCfg = ScenarioCfg()
    sweep: SweepCfg = SweepCfg()
    output_dir: str = "out"
    seed: int = 0

    @model_validator(mode="after")
    def _cross_checks(self) -> "Config":
        # build every derived object once so invariant violations surface at load
        self.power_levels()
        self.battery_model()
        self.abnormality_model()
        self.generator_config()
        self.calibration_plan()
        self.period_schedule()
        return self

    # -- conversions -------------------------------------------------------

    def power_levels(self) -> tuple[PowerLevel, ...]:
        return validate_levels([PowerLevel(i, lv.current_ma, lv.consumption_mw) for i, lv in enumerate(self.levels)])

    def battery_model(self, charging: bool = False) -> BatteryModel:
        b = self.battery
        drain = {}
        for name, d in b.drain.items():
            if not (name.startswith("U") and name[1:].isdigit()):
                raise ValueError(f"drain key {name!r} is not a level name like 'U1'")
            drain[int(name[1:])] = d
        model = BatteryModel(
            b.n_states, drain, b.charge_rate, frozenset(_activity_key(a) for a in b.charge_activities), b.charge_prob, charging
        )
        # configured rates are per hour
        return model if self.scenario.step == 1.0 else model.for_step(self.scenario.step)

    def abnormality_model(self) -> AbnormalityModel:
        params = {_activity_key(k): AbnormalityParams(v.m_a, v.sigma_a, v.theta) for k, v in self.abnormality.items()}
        missing = set(ACTIVITIES) - set(params)
        if missing:
            raise ValueError(f"abnormality entries missing for {sorted(a.label for a in missing)}")
        return AbnormalityModel(params)

    def generator_config(self) -> GeneratorConfig:
        g = self.generator
        noise = NoiseModel(
            {_activity_key(k): v for k, v in g.noise.motion.items()},
            g.noise.motion_gain,
            g.noise.ambient_gain,
            g.noise.current_exponent,
            g.noise.scale,
        )
        return GeneratorConfig(g.sample_rate, g.dc_ir, g.dc_red, g.perfusion, g.resp_gain, SpO2Coefficients(g.spo2.alpha, g.spo2.beta, g.spo2.gamma), noise)

    def calibration_plan(self) -> CalibrationPlan:
        c = self.calibration
        return CalibrationPlan(c.windows, c.window_seconds, c.heart_rate, c.respiration_rate, c.spo2, c.seed)

    def subject_model(self) -> SubjectModel:
        s = self.subjects
        return SubjectModel(s.night_bias, s.persistence, s.jitter)

    def period_schedule(self) -> PeriodSchedule:
        if self.schedule is None:
            return default_schedule(self.subject_model())
        return PeriodSchedule.from_arrays(np.asarray(m, dtype=float) for m in self.schedule)

    def risk_config(self) -> RiskConfig:
        r = self.risk
        return RiskConfig(r.tau, r.zeta, r.omega, r.truncate)

    def error_table(self, base_dir: Path | None = None) -> ErrorModelTable:
        if self.error_model_csv is None:
            text = resources.files("fogsense.data").joinpath(DEFAULT_TABLE).read_text()
        else:
            path = Path(self.error_model_csv)
            if not path.is_absolute() and base_dir is not None:
                path = base_dir / path
            text = path.read_text()
        return ErrorModelTable.from_csv(text)

    def risk_inputs(self, table: ErrorModelTable) -> RiskInputs:
        r = self.risk
        return RiskInputs(table, self.abnormality_model(), self.power_levels(), r.tau, r.truncate, r.energy_reference_mw)

    def policy_spec(self, text: str | None = None) -> PolicySpec:
        r, s = self.risk, self.scenario
        return PolicySpec.parse(
            text or s.policy, omega=r.omega, zeta=r.zeta, gamma=r.gamma, horizon=r.horizon, mode=s.mdp_mode
        )

    def scenario_for(self, table: ErrorModelTable, policy: PolicySpec, charging: bool | None = None) -> Scenario:
        s = self.scenario
        return Scenario(
            self.period_schedule(),
            self.battery_model(s.charging if charging is None else charging),
            self.risk_inputs(table),
            policy,
            s.duration,
            s.step,
            tuple(s.seeds),
            s.start_battery,
            _activity_key(s.start_activity),
            s.start_hour,
            misclassification=s.misclassification,
        )

    def sweep_spec(self) -> SweepSpec:
        w = self.sweep
        return SweepSpec(tuple(w.zetas), tuple(w.omegas), tuple(w.static_levels), w.subjects, w.weeks, self.seed)


def _path(loc: tuple) -> str:
    out = "$"
    for part in loc:
        out += f"[{part}]" if isinstance(part, int) else f".{part}"
    return out


def _message(err: dict) -> str:
    kind = err["type"]
    if kind == "missing":
        return "missing required field"
    if kind == "extra_forbidden":
        return "unknown key"
    if kind == "value_error":
        return str(err["ctx"]["error"])
    return err["msg"]


def parse_config(data: object) -> Config:
    try:
        return Config.model_validate(data)
    except ValidationError as exc:
        first = exc.errors(include_url=False)[0]
        raise ConfigError(f"{_path(first['loc'])}: {_message(first)}") from None


def load_config(path: str | Path) -> Config:
    text = Path(path).read_text()
    if not text.strip():
        raise ConfigError("$.levels: missing required field")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"$: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(data, dict):
        raise ConfigError("$: top level must be a JSON object")
    return parse_config(data)


def default_config_dict() -> dict:
    """The shipped example configuration with every default spelled out."""
    from .domain import DEFAULT_LEVELS

    cfg = Config(levels=[LevelCfg(current_ma=u.current_ma, consumption_mw=u.consumption_mw) for u in DEFAULT_LEVELS])
    return cfg.model_dump(mode="json")
