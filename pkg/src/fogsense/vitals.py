"""Synthetic PPG generation, filter-based vital sign extraction and the
per-(activity, power level) measurement error model.

Heart rate and respiration rate come from band-pass filtering the infrared
waveform around the dominant spectral peak and timing the maxima of its
first difference. SpO2 comes from the ratio of ratios of the pulsatile (AC)
and baseline (DC) parts of the red and infrared channels.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import signal as sp_signal

from .domain import ACTIVITIES, Activity, PowerLevel

HR_BAND = (0.5, 3.0)
RR_BAND = (0.1, 1.0)
HR_LIMITS = (30.0, 180.0)
RR_LIMITS = (6.0, 60.0)
SPO2_LIMITS = (70.0, 100.0)

# normalisers for the scalar RMSE: width of each sign's physiological band
HR_SPAN = 150.0
RR_SPAN = 54.0
SPO2_SPAN = 30.0


@dataclass(frozen=True)
class SpO2Coefficients:
    """Quadratic calibration SpO2 = alpha*R**2 + beta*R + gamma.

    The default is the common linear approximation 110 - 25 R, not a
    datasheet value.
    """

    alpha: float = 0.0
    beta: float = -25.0
    gamma: float = 110.0

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.alpha, self.beta, self.gamma)):
            raise ValueError("SpO2 coefficients must be finite")

    def spo2(self, ratio: float) -> float:
        return self.alpha * ratio**2 + self.beta * ratio + self.gamma

    def ratio_for(self, spo2: float) -> float:
        """Invert the calibration curve, taking the root in the physical range."""
        a, b, c = self.alpha, self.beta, self.gamma - spo2
        if a == 0.0:
            if b == 0.0:
                raise ValueError("degenerate SpO2 calibration (alpha = beta = 0)")
            return -c / b
        disc = b * b - 4 * a * c
        if disc < 0:
            raise ValueError(f"SpO2 {spo2} is not reachable with these coefficients")
        roots = [(-b + s * math.sqrt(disc)) / (2 * a) for s in (1.0, -1.0)]
        positive = [r for r in roots if r > 0]
        if not positive:
            raise ValueError(f"SpO2 {spo2} maps to a non-positive ratio")
        return min(positive)


@dataclass(frozen=True)
class SignalSpec:
    heart_rate: float
    respiration_rate: float
    spo2: float
    activity: Activity
    power_level: PowerLevel
    duration: float
    noise_seed: int = 0

    def __post_init__(self) -> None:
        if not HR_LIMITS[0] <= self.heart_rate <= HR_LIMITS[1]:
            raise ValueError(f"heart_rate {self.heart_rate} outside {HR_LIMITS} bpm")
        if not RR_LIMITS[0] <= self.respiration_rate <= RR_LIMITS[1]:
            raise ValueError(f"respiration_rate {self.respiration_rate} outside {RR_LIMITS} brpm")
        if not SPO2_LIMITS[0] <= self.spo2 <= SPO2_LIMITS[1]:
            raise ValueError(f"spo2 {self.spo2} outside {SPO2_LIMITS} %")
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if self.power_level.is_sleep:
            raise ValueError("the sensor emits no signal in sleep mode (U0)")


@dataclass(frozen=True)
class PpgFrame:
    sample_rate: float
    red: np.ndarray
    infrared: np.ndarray

    def __post_init__(self) -> None:
        if self.sample_rate < 25:
            raise ValueError("sample_rate must be at least 25 Hz")
        if len(self.red) != len(self.infrared):
            raise ValueError("red and infrared channels differ in length")
        if len(self.red) == 0:
            raise ValueError("empty frame")

    @property
    def duration(self) -> float:
        return len(self.red) / self.sample_rate

    def to_csv(self) -> str:
        """``t,red,infrared`` with t in seconds from the first sample."""
        lines = ["t,red,infrared"]
        for i, (r, ir) in enumerate(zip(self.red, self.infrared)):
            lines.append(f"{i / self.sample_rate!r},{float(r)!r},{float(ir)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "PpgFrame":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0]] != ["t", "red", "infrared"]:
            raise ValueError("frame CSV must have the header t,red,infrared")
        data = np.array([[float(c) for c in row] for row in rows[1:] if row], dtype=float)
        if len(data) < 2:
            raise ValueError("frame CSV needs at least two samples")
        dt = np.diff(data[:, 0])
        if np.any(dt <= 0) or np.ptp(dt) > 1e-6 * dt.mean():
            raise ValueError("frame timestamps must be uniformly spaced and increasing")
        return cls(1.0 / float(dt.mean()), data[:, 1], data[:, 2])


@dataclass(frozen=True)
class PpgFeatures:
    ac_ir: float
    ac_red: float
    dc_ir: float
    dc_red: float

    def __post_init__(self) -> None:
        if not (self.dc_ir > 0 and self.dc_red > 0 and self.ac_ir > 0 and self.ac_red >= 0):
            raise ValueError(f"invalid PPG features {self}")

    @property
    def ratio(self) -> float:
        return (self.ac_red * self.dc_ir) / (self.ac_ir * self.dc_red)


@dataclass(frozen=True)
class VitalSigns:
    """Extracted signs. ``None`` marks a sign with insufficient signal."""

    heart_rate: float | None
    respiration_rate: float | None
    spo2: float | None

    @property
    def complete(self) -> bool:
        return None not in (self.heart_rate, self.respiration_rate, self.spo2)

    def to_dict(self) -> dict:
        return {
            "heart_rate": self.heart_rate,
            "respiration_rate": self.respiration_rate,
            "spo2": self.spo2,
        }


@dataclass(frozen=True)
class NoiseModel:
    """Synthetic sensor impairments.

    Motion artifacts are scaled per activity relative to the infrared AC
    amplitude; ambient and detector noise has a standard deviation
    proportional to ``current_ma ** -current_exponent`` (0.5 is the
    shot-noise limit). ``scale`` multiplies both and 0 gives clean frames.
    """

    motion: Mapping[Activity, float] = field(
        default_factory=lambda: {
            Activity.SLEEPING: 0.2,
            Activity.SITTING: 0.5,
            Activity.WALKING: 2.0,
            Activity.JOGGING: 4.0,
            Activity.RUNNING: 6.0,
        }
    )
    motion_gain: float = 0.03
    ambient_gain: float = 1.0  # ambient std, in AC units, at 1 mA
    current_exponent: float = 0.5
    scale: float = 1.0

    def __post_init__(self) -> None:
        if min(self.scale, self.motion_gain, self.ambient_gain, self.current_exponent) < 0:
            raise ValueError("noise gains must be nonnegative")
        missing = set(ACTIVITIES) - set(self.motion)
        if missing:
            raise ValueError(f"motion multipliers missing for {sorted(a.label for a in missing)}")


@dataclass(frozen=True)
class GeneratorConfig:
    sample_rate: float = 50.0
    dc_ir: float = 1.0
    dc_red: float = 0.8
    perfusion: float = 0.02  # AC/DC of the infrared channel
    resp_gain: float = 0.4  # baseline oscillation amplitude relative to the pulse
    coeffs: SpO2Coefficients = SpO2Coefficients()
    noise: NoiseModel = NoiseModel()


def _pulse_shape(phase: np.ndarray) -> np.ndarray:
    # systolic wave plus a smaller, later diastolic wave; unit peak-to-peak, zero mean
    systolic = np.exp(4.0 * (np.cos(phase - 1.2) - 1.0))
    diastolic = 0.35 * np.exp(6.0 * (np.cos(phase - 2.6) - 1.0))
    grid = np.linspace(0.0, 2 * np.pi, 512, endpoint=False)
    ref = np.exp(4.0 * (np.cos(grid - 1.2) - 1.0)) + 0.35 * np.exp(6.0 * (np.cos(grid - 2.6) - 1.0))
    return (systolic + diastolic - ref.mean()) / np.ptp(ref)


def _motion_walk(rng: np.random.Generator, n: int, fs: float) -> np.ndarray:
    walk = np.cumsum(rng.standard_normal(n))
    hi = min(4.0, 0.45 * fs)
    walk = bandpass(walk, fs, 0.5, hi)
    sd = walk.std()
    return walk / sd if sd > 0 else walk


def generate_ppg(spec: SignalSpec, config: GeneratorConfig = GeneratorConfig()) -> PpgFrame:
    fs = config.sample_rate
    n = int(round(fs * spec.duration))
    if n < 2:
        raise ValueError("duration too short for a single sample pair")
    t = np.arange(n) / fs
    rng = np.random.default_rng(spec.noise_seed)
    motion_rng, ambient_rng, phase_rng = (np.random.default_rng(s) for s in rng.bit_generator.seed_seq.spawn(3))

    ph_heart, ph_resp = phase_rng.uniform(0, 2 * np.pi, size=2)
    pulse = _pulse_shape(2 * np.pi * spec.heart_rate / 60.0 * t + ph_heart)
    resp = 0.5 * np.sin(2 * np.pi * spec.respiration_rate / 60.0 * t + ph_resp)
    wave = pulse + config.resp_gain * resp

    ac_ir = config.perfusion * config.dc_ir
    ratio = config.coeffs.ratio_for(spec.spo2)
    ac_red = ratio * config.perfusion * config.dc_red
    ir = config.dc_ir + ac_ir * wave
    red = config.dc_red + ac_red * wave

    noise = config.noise
    if noise.scale > 0:
        # motion moves the whole optical path, so it scales with each channel's DC
        motion = noise.scale * noise.motion_gain * noise.motion[spec.activity] * ac_ir * _motion_walk(motion_rng, n, fs)
        ir = ir + motion
        red = red + motion * (config.dc_red / config.dc_ir)
        amb_sd = noise.scale * noise.ambient_gain * ac_ir * spec.power_level.current_ma ** -noise.current_exponent
        ambient = ambient_rng.standard_normal((2, n)) * amb_sd
        ir = ir + ambient[0]
        red = red + ambient[1]

    return PpgFrame(sample_rate=fs, red=red, infrared=ir)


def bandpass(x: Sequence[float], sample_rate: float, lo: float, hi: float) -> np.ndarray:
    """Zero-phase Butterworth band-pass (order 2 per pass, forward-backward)."""
    x = np.asarray(x, dtype=float)
    if not 0 < lo < hi < sample_rate / 2:
        raise ValueError(f"invalid band [{lo}, {hi}] Hz for sample rate {sample_rate} Hz")
    sos = sp_signal.butter(2, [lo, hi], btype="bandpass", fs=sample_rate, output="sos")
    if len(x) <= 3 * (2 * len(sos) + 1):
        raise ValueError("signal too short to filter")
    return sp_signal.sosfiltfilt(sos, x)


@dataclass(frozen=True)
class Spectrum:
    freqs: np.ndarray
    power: np.ndarray

    @property
    def df(self) -> float:
        return float(self.freqs[1] - self.freqs[0])

    def total_power(self) -> float:
        return float(self.power.sum() * self.df)

    def peak_frequency(self, lo: float | None = None, hi: float | None = None) -> float:
        mask = np.ones_like(self.freqs, dtype=bool)
        if lo is not None:
            mask &= self.freqs >= lo
        if hi is not None:
            mask &= self.freqs <= hi
        idx = np.flatnonzero(mask)
        return float(self.freqs[idx[np.argmax(self.power[idx])]])


def power_spectral_density(
    x: Sequence[float], sample_rate: float, segment_seconds: float = 8.0, resolution: float = 0.01
) -> Spectrum:
    """Averaged periodogram: Hann segments of ``segment_seconds``, 50% overlap.

    Segments are zero-padded so the frequency grid is no coarser than
    ``resolution`` Hz; the density still integrates to the signal variance.
    """
    x = np.asarray(x, dtype=float)
    if len(x) < 2 * sample_rate:
        raise ValueError("need at least 2 s of signal for a spectrum")
    nperseg = min(len(x), int(round(segment_seconds * sample_rate)))
    nfft = max(nperseg, 1 << math.ceil(math.log2(sample_rate / resolution)))
    freqs, power = sp_signal.welch(
        x,
        fs=sample_rate,
        window="hann",
        nperseg=nperseg,
        noverlap=nperseg // 2,
        nfft=nfft,
        detrend="constant",
        scaling="density",
    )
    return Spectrum(freqs, power)


def refine_cutoffs(spectrum: Spectrum, initial_band: tuple[float, float], fraction: float = 0.4) -> tuple[float, float]:
    lo, hi = initial_band
    if not lo < hi:
        raise ValueError("initial band must satisfy lo < hi")
    mask = (spectrum.freqs >= lo) & (spectrum.freqs <= hi)
    if not mask.any() or not np.any(spectrum.power[mask] > 0):
        return (lo, hi)
    centre = spectrum.peak_frequency(lo, hi)
    half = 0.5 * fraction * (hi - lo)
    return (max(lo, centre - half), min(hi, centre + half))


def _moving_positive_percentile(d: np.ndarray, at: np.ndarray, window: int, q: float) -> np.ndarray:
    """q-th percentile of the positive entries of ``d`` in a centred window
    around each index in ``at`` (linear interpolation, 0 if none)."""
    window = max(1, min(window, len(d)))
    left = window // 2
    padded = np.pad(np.where(d > 0, d, np.inf), (left, window - 1 - left), constant_values=np.inf)
    rows = np.sort(sliding_window_view(padded, window)[at], axis=1)
    counts = np.sum(np.isfinite(rows), axis=1)
    out = np.zeros(len(at))
    ok = counts > 0
    pos = (counts[ok] - 1) * q / 100.0
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, counts[ok] - 1)
    r = rows[ok]
    idx = np.arange(len(r))
    out[ok] = r[idx, lo] + (pos - lo) * (r[idx, hi] - r[idx, lo])
    return out


def detect_peaks(
    x: Sequence[float],
    sample_rate: float,
    min_interval: float = 60.0 / 180.0,
    window_seconds: float = 5.0,
) -> np.ndarray:
    """Indices of the local maxima of the first difference.

    A maximum counts if it exceeds half the moving 75th percentile of the
    positive differences over ``window_seconds``; maxima closer than
    ``min_interval`` seconds are thinned, the steeper one kept.
    """
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        raise ValueError("need at least two samples")
    d = np.diff(x)
    if len(d) < 3:
        return np.array([], dtype=int)
    distance = max(1, int(math.ceil(min_interval * sample_rate - 1e-9)))
    peaks, _ = sp_signal.find_peaks(d, distance=distance)
    peaks = peaks[d[peaks] > 0]
    threshold = 0.5 * _moving_positive_percentile(d, peaks, int(round(window_seconds * sample_rate)), 75.0)
    return peaks[d[peaks] > threshold]


def _peak_times(x: np.ndarray, peaks: np.ndarray, sample_rate: float) -> np.ndarray:
    """Sub-sample peak times (s) by a parabola through each difference maximum."""
    d = np.diff(x)
    i = peaks[(peaks > 0) & (peaks < len(d) - 1)]
    y0, y1, y2 = d[i - 1], d[i], d[i + 1]
    denom = y0 - 2 * y1 + y2
    offset = np.where(denom != 0, 0.5 * (y0 - y2) / np.where(denom != 0, denom, 1.0), 0.0)
    return (i + np.clip(offset, -0.5, 0.5)) / sample_rate


def _rate(x: np.ndarray, sample_rate: float, min_interval: float) -> float | None:
    """Events per minute from the median inter-peak interval."""
    times = _peak_times(x, detect_peaks(x, sample_rate, min_interval=min_interval), sample_rate)
    if len(times) < 2:
        return None
    return 60.0 / float(np.median(np.diff(times)))


def extract_features(frame: PpgFrame, band: tuple[float, float]) -> PpgFeatures:
    fs = frame.sample_rate
    ac_ir = 2 * math.sqrt(2) * float(np.std(bandpass(frame.infrared, fs, *band)))
    ac_red = 2 * math.sqrt(2) * float(np.std(bandpass(frame.red, fs, *band)))
    return PpgFeatures(ac_ir=ac_ir, ac_red=ac_red, dc_ir=float(np.mean(frame.infrared)), dc_red=float(np.mean(frame.red)))


def spo2_from_features(features: PpgFeatures, coeffs: SpO2Coefficients) -> float:
    return float(min(100.0, max(0.0, coeffs.spo2(features.ratio))))


def _notch_harmonics(x: np.ndarray, fs: float, f0: float, upto: float, q: float = 6.0) -> np.ndarray:
    k = 1
    while k * f0 <= upto and k * f0 < fs / 2:
        b, a = sp_signal.iirnotch(k * f0, q, fs=fs)
        x = sp_signal.filtfilt(b, a, x)
        k += 1
    return x


def extract_vitals(frame: PpgFrame, coeffs: SpO2Coefficients = SpO2Coefficients()) -> VitalSigns:
    fs = frame.sample_rate
    if frame.duration < 10.0:
        raise ValueError("need at least 10 s of signal to extract vitals")
    ir = frame.infrared - np.mean(frame.infrared)

    hr_min_interval = 60.0 / HR_LIMITS[1]
    rr_min_interval = 60.0 / RR_LIMITS[1]

    hr_band = refine_cutoffs(power_spectral_density(ir, fs), HR_BAND)
    hr = _rate(bandpass(ir, fs, *hr_band), fs, hr_min_interval)

    # the cardiac fundamental can sit inside the respiration band; notch it out first
    resp_src = ir if hr is None else _notch_harmonics(ir, fs, hr / 60.0, RR_BAND[1] + 0.25)
    rr_band = refine_cutoffs(power_spectral_density(resp_src, fs), RR_BAND)
    rr = _rate(bandpass(resp_src, fs, *rr_band), fs, rr_min_interval)

    # second heartbeat pass with the breathing fundamental removed, unless the two coincide
    if hr is not None and rr is not None and abs(hr - rr) / 60.0 > 0.1:
        hr_src = _notch_harmonics(ir, fs, rr / 60.0, rr / 60.0)
        hr_band = refine_cutoffs(power_spectral_density(hr_src, fs), HR_BAND)
        hr = _rate(bandpass(hr_src, fs, *hr_band), fs, hr_min_interval) or hr

    try:
        spo2 = spo2_from_features(extract_features(frame, hr_band), coeffs)
    except ValueError:
        spo2 = None
    return VitalSigns(heart_rate=hr, respiration_rate=rr, spo2=spo2)


def window_error(truth: VitalSigns, measured: VitalSigns) -> float:
    """Scalar RMSE over the three signs, each normalised by its band width."""
    terms = [
        (measured.heart_rate - truth.heart_rate) / HR_SPAN,
        (measured.respiration_rate - truth.respiration_rate) / RR_SPAN,
        (measured.spo2 - truth.spo2) / SPO2_SPAN,
    ]
    return math.sqrt(sum(e * e for e in terms) / 3.0)


# -- error model ---------------------------------------------------------------


@dataclass(frozen=True)
class ErrorStats:
    mu: float
    sigma: float
    n_samples: int


class CalibrationError(ValueError):
    pass


class ErrorModelTable:
    """Gaussian RMSE parameters per (activity, power level index).

    The mean must not increase with the power level for any activity.
    """

    def __init__(self, entries: Mapping[tuple[Activity, int], ErrorStats]):
        self.entries: dict[tuple[Activity, int], ErrorStats] = dict(sorted(entries.items()))
        for (a, m), st in self.entries.items():
            if m < 1:
                raise ValueError(f"error model entry for sleep level U{m} ({a.label}) is not allowed")
            if not (math.isfinite(st.mu) and math.isfinite(st.sigma) and st.sigma >= 0):
                raise ValueError(f"invalid error stats for ({a.label}, U{m}): {st}")
            if st.n_samples >= 2 and st.sigma <= 0:
                raise ValueError(f"sigma must be positive for ({a.label}, U{m}) with n_samples >= 2")
        for a in self.activities:
            levels = sorted(m for (b, m) in self.entries if b == a)
            mus = [self.entries[(a, m)].mu for m in levels]
            for (m0, mu0), (m1, mu1) in zip(zip(levels, mus), zip(levels[1:], mus[1:])):
                if mu1 > mu0:
                    raise ValueError(
                        f"error mean must be non-increasing in power level: {a.label} U{m0}={mu0:g} < U{m1}={mu1:g}"
                    )

    @property
    def activities(self) -> list[Activity]:
        return sorted({a for a, _ in self.entries})

    @property
    def level_indices(self) -> list[int]:
        return sorted({m for _, m in self.entries})

    def stats(self, activity: Activity, level: int | PowerLevel) -> ErrorStats:
        m = level.index if isinstance(level, PowerLevel) else int(level)
        try:
            return self.entries[(activity, m)]
        except KeyError:
            raise KeyError(f"error model has no entry for ({Activity(activity).label}, U{m})") from None

    def require(self, activities: Iterable[Activity], level_indices: Iterable[int]) -> None:
        missing = [(a, m) for a in activities for m in level_indices if (a, m) not in self.entries]
        if missing:
            names = ", ".join(f"({a.label}, U{m})" for a, m in missing)
            raise ValueError(f"error model is missing entries: {names}")

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ErrorModelTable) and self.entries == other.entries

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["activity", "power_level", "mu", "sigma", "n_samples"])
        for (a, m), st in self.entries.items():
            w.writerow([a.label, m, repr(float(st.mu)), repr(float(st.sigma)), st.n_samples])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ErrorModelTable":
        rows = csv.DictReader(io.StringIO(text))
        if rows.fieldnames != ["activity", "power_level", "mu", "sigma", "n_samples"]:
            raise ValueError(f"unexpected error model header {rows.fieldnames}")
        entries = {}
        for row in rows:
            key = (Activity.from_label(row["activity"]), int(row["power_level"]))
            entries[key] = ErrorStats(float(row["mu"]), float(row["sigma"]), int(row["n_samples"]))
        return cls(entries)


@dataclass(frozen=True)
class CalibrationPlan:
    """Windows drawn per (activity, level) pair; ground truth is shared across
    pairs so every pair sees the same physiology and noise realisations."""

    windows: int = 20
    window_seconds: float = 60.0
    heart_rate: tuple[float, float] = (50.0, 120.0)
    respiration_rate: tuple[float, float] = (10.0, 25.0)
    spo2: tuple[float, float] = (92.0, 99.0)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.windows < 20:
            raise ValueError("calibration needs at least 20 windows per pair")
        if self.window_seconds < 10:
            raise ValueError("calibration windows must be at least 10 s long")

    def truths(self) -> list[tuple[float, float, float, int]]:
        rng = np.random.default_rng(self.seed)
        hr = rng.uniform(*self.heart_rate, size=self.windows)
        rr = rng.uniform(*self.respiration_rate, size=self.windows)
        spo2 = rng.uniform(*self.spo2, size=self.windows)
        seeds = rng.integers(0, 2**31 - 1, size=self.windows)
        return [(float(a), float(b), float(c), int(s)) for a, b, c, s in zip(hr, rr, spo2, seeds)]


def calibrate_error_model(
    activities: Iterable[Activity],
    levels: Iterable[PowerLevel],
    plan: CalibrationPlan = CalibrationPlan(),
    config: GeneratorConfig = GeneratorConfig(),
) -> ErrorModelTable:
    levels = [u for u in levels if not u.is_sleep]
    truths = plan.truths()
    entries = {}
    for activity in sorted(activities):
        for level in sorted(levels):
            errors = []
            for hr, rr, spo2, seed in truths:
                spec = SignalSpec(hr, rr, spo2, activity, level, plan.window_seconds, seed)
                measured = extract_vitals(generate_ppg(spec, config), config.coeffs)
                if measured.complete:
                    errors.append(window_error(VitalSigns(hr, rr, spo2), measured))
            if len(errors) < 2:
                raise CalibrationError(
                    f"only {len(errors)} valid windows for ({activity.label}, {level.name}); need at least 2"
                )
            e = np.asarray(errors)
            entries[(activity, level.index)] = ErrorStats(float(e.mean()), float(e.std(ddof=1)), len(e))
    return ErrorModelTable(entries)
