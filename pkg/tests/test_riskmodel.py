import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from fogsense.domain import ACTIVITIES, DEFAULT_LEVELS, Activity
from fogsense.riskmodel import (
    AbnormalityModel,
    AbnormalityParams,
    RiskConfig,
    energy_cost,
    gaussian_tail,
    p_abnormal,
    p_error,
    p_misdetect,
    total_cost,
)
from fogsense.vitals import ErrorModelTable, ErrorStats

U0, U1, U5 = DEFAULT_LEVELS[0], DEFAULT_LEVELS[1], DEFAULT_LEVELS[5]


def density(x, mu, sigma):
    return np.exp(-0.5 * ((x - mu) / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))


def tail_by_quadrature(mu, sigma, t):
    value, _ = integrate.quad(density, t, math.inf, args=(mu, sigma), epsabs=1e-14, epsrel=1e-12)
    return value


def tail_by_trapezoid(mu, sigma, t, n=400_001):
    upper = mu + 12 * sigma
    if t >= upper:
        return 0.0
    x = np.linspace(t, upper, n)
    return float(integrate.trapezoid(density(x, mu, sigma), x))


def single_table(mu, sigma, activity=Activity.SITTING, level=1):
    return ErrorModelTable({(activity, level): ErrorStats(mu, sigma, 20)})


def model_with(m_a, sigma_a, theta):
    return AbnormalityModel({a: AbnormalityParams(m_a, sigma_a, theta) for a in ACTIVITIES})


# -- gaussian tail ---------------------------------------------------------------


def test_tail_standard_examples():
    assert gaussian_tail(0, 1, 0) == 0.5
    assert gaussian_tail(0, 1, 1.6449) == pytest.approx(tail_by_quadrature(0, 1, 1.6449), abs=1e-12)
    assert gaussian_tail(0, 1, 1.6449) == pytest.approx(0.05, abs=1e-4)
    assert gaussian_tail(3, 0, 2) == 1.0
    assert gaussian_tail(3, 0, 4) == 0.0


def test_tail_rejects_negative_sigma():
    with pytest.raises(ValueError):
        gaussian_tail(0, -1, 0)


def test_tail_matches_numeric_integration():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        mu = rng.uniform(-5, 5)
        sigma = rng.uniform(0.05, 3)
        t = mu + sigma * rng.uniform(-6, 6)
        assert abs(gaussian_tail(mu, sigma, t) - tail_by_trapezoid(mu, sigma, t)) < 1e-9


@given(st.floats(-50, 50), st.floats(1e-3, 20), st.floats(-100, 100))
def test_tail_is_probability(mu, sigma, t):
    p = gaussian_tail(mu, sigma, t)
    assert 0.0 <= p <= 1.0


# -- error, abnormality, misdetection ---------------------------------------------


def test_p_error_at_mean_is_half():
    assert p_error(single_table(0.1, 0.03), Activity.SITTING, U1, 0.1) == 0.5


def test_p_error_example():
    table = single_table(0.1, 0.05)
    assert p_error(table, Activity.SITTING, U1, 0.2) == pytest.approx(tail_by_quadrature(0.1, 0.05, 0.2), abs=1e-12)
    assert p_error(table, Activity.SITTING, U1, 0.2) == pytest.approx(0.0228, abs=1e-4)


def test_p_error_sleep_is_certain():
    assert p_error(single_table(0.1, 0.05), Activity.SITTING, U0, 0.2) == 1.0


def test_p_error_missing_entry_named():
    with pytest.raises(KeyError, match="Running, U1"):
        p_error(single_table(0.1, 0.05), Activity.RUNNING, U1, 0.2)


def test_p_error_truncated_conditions_on_nonnegative_error():
    table = single_table(0.05, 0.05)
    plain = p_error(table, Activity.SITTING, U1, 0.1)
    cut = p_error(table, Activity.SITTING, U1, 0.1, truncate=True)
    assert cut == pytest.approx(plain / gaussian_tail(0.05, 0.05, 0.0))


def test_p_abnormal_examples():
    assert p_abnormal(model_with(120, 10, 120), Activity.WALKING) == 0.5
    assert p_abnormal(model_with(100, 10, 120), Activity.WALKING) == pytest.approx(
        tail_by_quadrature(100, 10, 120), abs=1e-12
    )
    assert p_abnormal(model_with(100, 10, 120), Activity.WALKING) == pytest.approx(0.0228, abs=1e-4)
    assert p_abnormal(model_with(100, 10, -math.inf), Activity.WALKING) == 1.0


def test_abnormality_sigma_positive():
    with pytest.raises(ValueError):
        AbnormalityParams(100, 0, 120)


def test_misdetect_product_example():
    # P_theta = 0.5 and P_tau = 0.004 by construction
    table = single_table(0.0, 1.0)
    tau = float(stats.norm.isf(0.004))
    model = model_with(120, 10, 120)
    pt = p_error(table, Activity.SITTING, U1, tau)
    assert pt == pytest.approx(0.004, abs=1e-12)
    assert p_misdetect(table, model, Activity.SITTING, U1, tau) == pytest.approx(0.002, abs=1e-12)


def test_misdetect_zero_error_annihilates():
    table = ErrorModelTable({(Activity.SITTING, 1): ErrorStats(0.01, 0.0, 1)})
    assert p_misdetect(table, model_with(200, 10, 120), Activity.SITTING, U1, 0.1) == 0.0


def test_misdetect_structure_on_random_inputs():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        mu, sigma = rng.uniform(0, 0.5), rng.uniform(0.001, 0.2)
        table = single_table(mu, sigma)
        model = model_with(rng.uniform(60, 160), rng.uniform(1, 30), rng.uniform(80, 160))
        tau = rng.uniform(0.01, 0.5)
        pe = p_error(table, Activity.SITTING, U1, tau)
        pa = p_abnormal(model, Activity.SITTING)
        pd = p_misdetect(table, model, Activity.SITTING, U1, tau)
        assert pd == pa * pe
        assert 0 <= pd <= min(pa, pe) <= 1


@given(
    st.lists(st.floats(0.0, 0.5), min_size=5, max_size=5),
    st.lists(st.floats(0.001, 0.3), min_size=5, max_size=5),
    st.floats(0.0, 0.5),
)
def test_p_error_monotone_when_sigma_also_shrinks(mus, sigmas, excess):
    # with sigma shrinking too, the ordering holds for tolerances at or above the means
    mus, sigmas = sorted(mus, reverse=True), sorted(sigmas, reverse=True)
    t = ErrorModelTable({(Activity.WALKING, m): ErrorStats(mu, sd, 20) for m, (mu, sd) in enumerate(zip(mus, sigmas), 1)})
    tau = mus[0] + excess + 1e-6
    values = [p_error(t, Activity.WALKING, u, tau) for u in DEFAULT_LEVELS]
    assert all(x >= y for x, y in zip(values, values[1:]))


@given(
    st.lists(st.floats(0.0, 1.0), min_size=5, max_size=5),
    st.floats(0.001, 0.3),
    st.floats(0.01, 1.0),
)
def test_p_error_monotone_for_ordered_tables(mus, sigma, tau):
    mus = sorted(mus, reverse=True)
    t = ErrorModelTable({(Activity.JOGGING, m): ErrorStats(mu, sigma, 20) for m, mu in enumerate(mus, start=1)})
    values = [p_error(t, Activity.JOGGING, u, tau) for u in DEFAULT_LEVELS]
    assert all(x >= y for x, y in zip(values, values[1:]))


# -- energy and total cost -----------------------------------------------------------


def test_energy_cost_examples():
    assert energy_cost(U5) == 1.0
    assert energy_cost(U0) == 0.0
    assert energy_cost(U1) == pytest.approx(69.3 / 89.43)
    assert energy_cost(U1) == pytest.approx(0.7749, abs=1e-4)


def test_energy_cost_in_watts():
    assert energy_cost(U5, reference_mw=1000.0) == pytest.approx(0.08943)


def _cost_inputs():
    table = ErrorModelTable({(a, m): ErrorStats(0.2 - 0.03 * m, 0.05, 20) for a in ACTIVITIES for m in range(1, 6)})
    return table, AbnormalityModel()


def test_total_cost_arithmetic():
    # omega = 0.17 with P_D = 0.2 and C_TX = 0.8
    assert 0.17 * 0.2 + 0.83 * 0.8 == pytest.approx(0.698)
    table, model = _cost_inputs()
    u = DEFAULT_LEVELS[2]
    pd = p_misdetect(table, model, Activity.WALKING, u, 0.1)
    expected = 0.17 * pd + 0.83 * energy_cost(u)
    assert total_cost(table, model, Activity.WALKING, u, 0.1, 0.17) == pytest.approx(expected, abs=1e-15)


def test_total_cost_endpoints():
    table, model = _cost_inputs()
    for a in ACTIVITIES:
        for u in DEFAULT_LEVELS[1:]:
            assert total_cost(table, model, a, u, 0.1, 0.0) == energy_cost(u)
            assert total_cost(table, model, a, u, 0.1, 1.0) == p_misdetect(table, model, a, u, 0.1)


@given(st.sampled_from(ACTIVITIES), st.sampled_from(DEFAULT_LEVELS[1:]), st.floats(0.0, 1.0))
def test_total_cost_is_affine_in_omega(activity, u, omega):
    table, model = _cost_inputs()
    a = total_cost(table, model, activity, u, 0.1, 1.0)
    b = total_cost(table, model, activity, u, 0.1, 0.0)
    assert total_cost(table, model, activity, u, 0.1, omega) == pytest.approx(omega * a + (1 - omega) * b, abs=1e-15)
    assert total_cost(table, model, activity, u, 0.1, 0.5) == pytest.approx((a + b) / 2, abs=1e-15)


def test_total_cost_rejects_bad_omega():
    table, model = _cost_inputs()
    with pytest.raises(ValueError):
        total_cost(table, model, Activity.SITTING, U1, 0.1, 1.5)


# -- configuration -------------------------------------------------------------------


@pytest.mark.parametrize("kwargs", [dict(tau=0.0), dict(zeta=1.5), dict(omega=-0.1)])
def test_risk_config_bounds(kwargs):
    with pytest.raises(ValueError):
        RiskConfig(**kwargs)


def test_eta_from_zeta():
    assert RiskConfig(zeta=0.002).eta(0.5) == pytest.approx(0.001)


def test_risk_inputs_require_full_table(risk):
    from fogsense.riskmodel import RiskInputs

    partial = ErrorModelTable({(Activity.SITTING, 1): ErrorStats(0.1, 0.05, 20)})
    with pytest.raises(ValueError, match="missing"):
        RiskInputs(partial, AbnormalityModel())
    assert 0 <= risk.p_misdetect(Activity.RUNNING, U1) <= 1
