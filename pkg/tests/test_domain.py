import pytest

from fogsense.domain import ACTIVITIES, DEFAULT_LEVELS, Activity, PowerLevel, level_by_name, validate_levels


def test_activity_order_and_labels():
    assert [a.label for a in ACTIVITIES] == ["Sleeping", "Sitting", "Walking", "Jogging", "Running"]
    assert [int(a) for a in ACTIVITIES] == list(range(5))
    assert Activity.from_label("Jogging") is Activity.JOGGING
    with pytest.raises(ValueError):
        Activity.from_label("Swimming")


def test_default_levels_are_valid():
    assert validate_levels(DEFAULT_LEVELS) == DEFAULT_LEVELS
    assert DEFAULT_LEVELS[0].is_sleep and not DEFAULT_LEVELS[1].is_sleep
    assert DEFAULT_LEVELS[5].consumption_mw == 89.43
    assert level_by_name(DEFAULT_LEVELS, "U3").current_ma == 6.3


def test_levels_must_increase():
    bad = list(DEFAULT_LEVELS)
    bad[2] = PowerLevel(2, 0.5, 73.26)
    with pytest.raises(ValueError, match="increase strictly"):
        validate_levels(bad)


def test_sleep_level_draws_nothing():
    bad = [PowerLevel(0, 0.1, 0.0)] + list(DEFAULT_LEVELS[1:])
    with pytest.raises(ValueError, match="sleep"):
        validate_levels(bad)


def test_level_indices_without_gaps():
    with pytest.raises(ValueError, match="gaps"):
        validate_levels([DEFAULT_LEVELS[0], DEFAULT_LEVELS[2]])
