import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fogsense.domain import ACTIVITIES, DEFAULT_LEVELS, Activity
from fogsense.vitals import (
    HR_BAND,
    CalibrationError,
    CalibrationPlan,
    ErrorModelTable,
    ErrorStats,
    GeneratorConfig,
    NoiseModel,
    PpgFeatures,
    PpgFrame,
    SignalSpec,
    Spectrum,
    SpO2Coefficients,
    VitalSigns,
    bandpass,
    calibrate_error_model,
    detect_peaks,
    extract_vitals,
    generate_ppg,
    power_spectral_density,
    refine_cutoffs,
    spo2_from_features,
    window_error,
)

U1, U3, U5 = DEFAULT_LEVELS[1], DEFAULT_LEVELS[3], DEFAULT_LEVELS[5]
CLEAN = GeneratorConfig(noise=NoiseModel(scale=0.0))


def clean_frame(hr, rr, spo2=97.0, seed=0, duration=60.0):
    return generate_ppg(SignalSpec(hr, rr, spo2, Activity.SITTING, U3, duration, seed), CLEAN)


# -- generator -----------------------------------------------------------------


def test_generator_heartbeat_dominates_band():
    frame = generate_ppg(SignalSpec(60, 12, 97, Activity.SITTING, U5, 60.0, 1))
    spec = power_spectral_density(frame.infrared - frame.infrared.mean(), frame.sample_rate)
    assert 0.9 <= spec.peak_frequency(*HR_BAND) <= 1.1


def test_generator_rejects_empty_duration():
    with pytest.raises(ValueError):
        generate_ppg(SignalSpec(60, 12, 97, Activity.SITTING, U5, 0.0, 1))


def test_generator_is_deterministic():
    spec = SignalSpec(80, 14, 95, Activity.WALKING, U3, 30.0, 7)
    a, b = generate_ppg(spec), generate_ppg(spec)
    assert np.array_equal(a.red, b.red) and np.array_equal(a.infrared, b.infrared)
    assert extract_vitals(a) == extract_vitals(b)


def test_generator_frame_length():
    frame = generate_ppg(SignalSpec(60, 12, 97, Activity.SITTING, U5, 12.5, 0))
    assert len(frame.red) == len(frame.infrared) == round(frame.sample_rate * 12.5)


@pytest.mark.parametrize("kwargs", [dict(heart_rate=20), dict(respiration_rate=70), dict(spo2=60)])
def test_signal_spec_limits(kwargs):
    base = dict(heart_rate=60, respiration_rate=12, spo2=97, activity=Activity.SITTING, power_level=U3, duration=10)
    with pytest.raises(ValueError):
        SignalSpec(**{**base, **kwargs})


def test_noise_grows_with_activity_and_shrinks_with_current():
    def residual(activity, level):
        spec = SignalSpec(70, 15, 97, activity, level, 30.0, 3)
        noisy = generate_ppg(spec).infrared
        clean = generate_ppg(spec, CLEAN).infrared
        return float(np.std(noisy - clean))

    assert residual(Activity.RUNNING, U3) > residual(Activity.SITTING, U3)
    assert residual(Activity.SITTING, U1) > residual(Activity.SITTING, U5)


def test_frame_csv_round_trip():
    frame = clean_frame(70, 15, duration=10.0)
    back = PpgFrame.from_csv(frame.to_csv())
    assert back.sample_rate == pytest.approx(frame.sample_rate)
    assert np.array_equal(back.red, frame.red) and np.array_equal(back.infrared, frame.infrared)


def test_frame_csv_rejects_bad_header():
    with pytest.raises(ValueError, match="header"):
        PpgFrame.from_csv("time,r,ir\n0,1,1\n")


# -- band-pass filter ------------------------------------------------------------


def _rms(x):
    return float(np.sqrt(np.mean(np.square(x))))


def test_bandpass_rejects_out_of_band_tone():
    fs = 50.0
    t = np.arange(int(60 * fs)) / fs
    x = np.sin(2 * np.pi * 5.0 * t)
    assert _rms(bandpass(x, fs, 0.1, 1.0)) < 0.1 * _rms(x)


def test_bandpass_passes_in_band_tone():
    fs = 50.0
    t = np.arange(int(60 * fs)) / fs
    x = np.sin(2 * np.pi * 0.5 * t)
    assert _rms(bandpass(x, fs, 0.1, 1.0)) > 0.7 * _rms(x)


def test_bandpass_zero_in_zero_out():
    y = bandpass(np.zeros(1000), 50.0, 0.1, 1.0)
    assert len(y) == 1000 and not np.any(y)


def test_bandpass_attenuates_one_octave_out():
    # 20 dB at one octave beyond each cutoff, measured on the steady-state response
    fs, lo, hi = 100.0, 0.5, 3.0
    t = np.arange(int(200 * fs)) / fs
    for f in (lo / 2, hi * 2):
        x = np.sin(2 * np.pi * f * t)
        y = bandpass(x, fs, lo, hi)
        core = slice(len(t) // 4, 3 * len(t) // 4)
        assert 20 * math.log10(_rms(y[core]) / _rms(x[core])) <= -20.0


@pytest.mark.parametrize("band", [(0.0, 1.0), (1.0, 0.5), (1.0, 25.0)])
def test_bandpass_invalid_band(band):
    with pytest.raises(ValueError):
        bandpass(np.zeros(1000), 50.0, *band)


# -- spectrum ------------------------------------------------------------------


def test_psd_single_tone():
    fs = 100.0
    t = np.arange(int(60 * fs)) / fs
    spec = power_spectral_density(np.sin(2 * np.pi * t), fs)
    assert 0.95 <= spec.peak_frequency() <= 1.05
    assert spec.freqs[0] == 0.0 and spec.freqs[-1] == pytest.approx(fs / 2)


def test_psd_white_noise_is_flat():
    for seed in range(20):
        x = np.random.default_rng(seed).standard_normal(int(60 * 50))
        spec = power_spectral_density(x, 50.0)
        share = spec.power * spec.df / spec.total_power()
        assert share.max() < 0.1


def test_psd_two_tones():
    fs = 50.0
    t = np.arange(int(60 * fs)) / fs
    spec = power_spectral_density(np.sin(2 * np.pi * 0.2 * t) + np.sin(2 * np.pi * 1.2 * t), fs)
    assert spec.peak_frequency(0.0, 0.7) == pytest.approx(0.2, abs=0.05)
    assert spec.peak_frequency(0.7, 5.0) == pytest.approx(1.2, abs=0.05)
    # the two largest local maxima are the tones themselves
    inner = np.flatnonzero((spec.power[1:-1] > spec.power[:-2]) & (spec.power[1:-1] >= spec.power[2:])) + 1
    top = np.sort(spec.freqs[inner[np.argsort(spec.power[inner])[-2:]]])
    assert top == pytest.approx([0.2, 1.2], abs=0.05)


@pytest.mark.parametrize("seed", range(5))
def test_psd_parseval(seed):
    rng = np.random.default_rng(seed)
    fs = 50.0
    t = np.arange(int(60 * fs)) / fs
    x = rng.standard_normal(len(t)) + 2 * np.sin(2 * np.pi * rng.uniform(0.2, 5) * t)
    spec = power_spectral_density(x, fs)
    assert spec.total_power() == pytest.approx(np.var(x), rel=0.05)


def test_psd_too_short():
    with pytest.raises(ValueError):
        power_spectral_density(np.zeros(60), 50.0)


# -- cutoff refinement -------------------------------------------------------------


def _spectrum_with_peak(f0):
    freqs = np.linspace(0, 25, 2501)
    return Spectrum(freqs, np.exp(-0.5 * ((freqs - f0) / 0.05) ** 2))


def test_refine_cutoffs_centres_on_peak():
    lo, hi = refine_cutoffs(_spectrum_with_peak(1.0), (0.5, 3.0))
    assert lo < 1.0 < hi
    assert hi - lo == pytest.approx(0.4 * 2.5)


def test_refine_cutoffs_flat_zero_falls_back():
    freqs = np.linspace(0, 25, 2501)
    assert refine_cutoffs(Spectrum(freqs, np.zeros_like(freqs)), (0.5, 3.0)) == (0.5, 3.0)


def test_refine_cutoffs_clips_at_edge():
    lo, hi = refine_cutoffs(_spectrum_with_peak(0.5), (0.5, 3.0))
    assert lo == 0.5 and hi < 3.0


# -- peak detection ----------------------------------------------------------------


def test_detect_peaks_counts_heartbeats():
    frame = clean_frame(60, 12)
    ir = bandpass(frame.infrared, frame.sample_rate, *HR_BAND)
    assert abs(len(detect_peaks(ir, frame.sample_rate)) - 60) <= 1


def test_detect_peaks_constant_signal():
    assert len(detect_peaks(np.full(500, 3.0), 50.0)) == 0


def test_detect_peaks_indices_increase():
    frame = generate_ppg(SignalSpec(90, 15, 97, Activity.WALKING, U3, 30.0, 2))
    peaks = detect_peaks(frame.infrared, frame.sample_rate)
    assert np.all(np.diff(peaks) > 0)
    assert np.all(np.diff(peaks) >= math.ceil(frame.sample_rate / 3) - 1e-9)


def _pulse_pair(gap, fs=100.0):
    t = np.arange(int(10 * fs)) / fs
    bump = lambda c: np.exp(-0.5 * ((t - c) / 0.02) ** 2)
    return bump(5.0) + bump(5.0 + gap), fs


def test_detect_peaks_pair_beyond_rate_limit_kept():
    x, fs = _pulse_pair(0.4)
    assert len(detect_peaks(x, fs)) == 2


def test_detect_peaks_pair_inside_rate_limit_merged():
    x, fs = _pulse_pair(0.1)
    assert len(detect_peaks(x, fs)) == 1


# -- extraction --------------------------------------------------------------------


def test_ratio_of_ratios_arithmetic():
    assert PpgFeatures(ac_ir=1.0, ac_red=0.5, dc_ir=2.0, dc_red=1.0).ratio == 1.0


def test_spo2_linear_calibration():
    feats = PpgFeatures(ac_ir=1.0, ac_red=0.44, dc_ir=1.0, dc_red=1.0)
    assert spo2_from_features(feats, SpO2Coefficients(0.0, -25.0, 110.0)) == pytest.approx(99.0)


def test_spo2_is_clamped():
    feats = PpgFeatures(ac_ir=1.0, ac_red=0.1, dc_ir=1.0, dc_red=1.0)
    assert spo2_from_features(feats, SpO2Coefficients()) == 100.0


def test_calibration_inverse():
    c = SpO2Coefficients(-16.666, 8.141, 100.6)
    assert c.spo2(c.ratio_for(95.0)) == pytest.approx(95.0)


@given(
    st.floats(0.01, 10), st.floats(0, 10), st.floats(0.01, 10), st.floats(0.01, 10), st.floats(1e-3, 1e3)
)
def test_ratio_red_scale_invariance(ac_ir, ac_red, dc_ir, dc_red, c):
    a = PpgFeatures(ac_ir, ac_red, dc_ir, dc_red).ratio
    b = PpgFeatures(ac_ir, ac_red * c, dc_ir, dc_red * c).ratio
    assert b == pytest.approx(a, rel=1e-12, abs=1e-300)


def test_extract_clean_72_15():
    v = extract_vitals(clean_frame(72, 15))
    assert v.heart_rate == pytest.approx(72, abs=1)
    assert v.respiration_rate == pytest.approx(15, abs=1)
    assert v.spo2 == pytest.approx(97, abs=1)


@pytest.mark.parametrize("rr", [8, 12, 18, 24, 30])
def test_band_separation(rr):
    assert extract_vitals(clean_frame(72, rr)).heart_rate == pytest.approx(72, abs=1)


def test_extract_needs_ten_seconds():
    with pytest.raises(ValueError):
        extract_vitals(clean_frame(72, 15, duration=5.0))


def test_flat_frame_marks_missing_signs():
    frame = PpgFrame(50.0, np.ones(1500), np.ones(1500))
    v = extract_vitals(frame)
    assert v.heart_rate is None and v.respiration_rate is None and not v.complete


def test_window_error_scalarisation():
    truth = VitalSigns(60.0, 15.0, 97.0)
    measured = VitalSigns(75.0, 20.4, 94.0)
    expected = math.sqrt(((15 / 150) ** 2 + (5.4 / 54) ** 2 + (3 / 30) ** 2) / 3)
    assert window_error(truth, measured) == pytest.approx(expected)


# -- error model -----------------------------------------------------------------


def _stats(mus):
    return {(Activity.SITTING, m): ErrorStats(mu, 0.01, 20) for m, mu in enumerate(mus, start=1)}


def test_table_rejects_increasing_mean():
    with pytest.raises(ValueError, match="non-increasing"):
        ErrorModelTable(_stats([0.1, 0.2]))


def test_table_rejects_zero_sigma_with_samples():
    with pytest.raises(ValueError, match="sigma"):
        ErrorModelTable({(Activity.SITTING, 1): ErrorStats(0.1, 0.0, 5)})


def test_table_missing_entry_named():
    table = ErrorModelTable(_stats([0.2, 0.1]))
    with pytest.raises(KeyError, match="Running, U1"):
        table.stats(Activity.RUNNING, 1)


def test_table_csv_round_trip(table):
    text = table.to_csv()
    assert text.splitlines()[0] == "activity,power_level,mu,sigma,n_samples"
    assert ErrorModelTable.from_csv(text) == table
    keys = [(Activity.from_label(r.split(",")[0]), int(r.split(",")[1])) for r in text.splitlines()[1:]]
    assert keys == sorted(keys)


def test_packaged_table_complete(table):
    table.require(ACTIVITIES, range(1, 6))


def test_calibration_zero_noise():
    plan = CalibrationPlan(windows=20, window_seconds=30.0)
    t = calibrate_error_model([Activity.SITTING, Activity.RUNNING], [U1, U5], plan, CLEAN)
    assert all(abs(s.mu) < 0.5 for s in t.entries.values())


def test_calibration_power_reduces_error():
    t = calibrate_error_model(ACTIVITIES, [U1, U5], CalibrationPlan(windows=20))
    for a in ACTIVITIES:
        assert t.stats(a, 1).mu > t.stats(a, 5).mu


def test_calibration_activity_increases_error():
    t = calibrate_error_model([Activity.SITTING, Activity.RUNNING], [U3], CalibrationPlan(windows=20))
    assert t.stats(Activity.RUNNING, 3).mu > t.stats(Activity.SITTING, 3).mu


def test_calibration_plan_minimum_windows():
    with pytest.raises(ValueError):
        CalibrationPlan(windows=5)


def test_calibration_error_names_pair(monkeypatch):
    import fogsense.vitals as vitals

    monkeypatch.setattr(vitals, "extract_vitals", lambda frame, coeffs: VitalSigns(None, None, None))
    with pytest.raises(CalibrationError, match=r"Sitting, U1"):
        calibrate_error_model([Activity.SITTING], [U1], CalibrationPlan(windows=20, window_seconds=10.0))
