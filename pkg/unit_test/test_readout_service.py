# test_readout_service.py
# 單發讀出：閾值、保真度、可見度與 latched 模式的誤判比

import pytest
from scipy.stats import norm

from app.errors import ReadoutError
from app.models import SensorParams, ShotRecord
from app.services import readout_service as rs


@pytest.mark.parametrize('ratio, expected', [(2.07, 0.70), (4.65, 0.98)])
def test_gaussian_visibility(ratio, expected):
    assert rs.gaussian_visibility(ratio) == pytest.approx(expected, abs=5e-3)


def test_standard_threshold_is_midpoint():
    threshold = rs.optimal_threshold(SensorParams(), 'standard')
    assert threshold.threshold == pytest.approx(1.035)
    assert threshold.f_m == pytest.approx(0.8497, abs=1e-4)
    assert threshold.fidelity_singlet == pytest.approx(threshold.fidelity_triplet)


def test_latched_threshold():
    threshold = rs.optimal_threshold(SensorParams(), 'latched')
    assert threshold.threshold == pytest.approx(2.325)
    assert threshold.f_m == pytest.approx(0.99, abs=1e-3)


def test_latch_failure_lowers_fidelity():
    threshold = rs.optimal_threshold(SensorParams(latch_success=0.9), 'latched')
    assert 0.92 < threshold.f_m < 0.96
    assert threshold.fidelity_triplet < threshold.fidelity_singlet


def test_identical_distributions_give_half():
    sensor = SensorParams(standard_mu_triplet=0.0)
    assert rs.optimal_threshold(sensor, 'standard').f_m == 0.5


def test_density_crossing_with_unequal_widths():
    x = rs.density_crossing(0.0, 3.0, 1.0, 2.0)
    assert 0.0 < x < 3.0
    assert norm.pdf(x, 0.0, 1.0) == pytest.approx(norm.pdf(x, 3.0, 2.0))


def test_readout_report_statistics():
    report = rs.readout_report(SensorParams(), 10000, seed=42)
    assert report['standard']['visibility'] == pytest.approx(rs.gaussian_visibility(2.07), abs=0.03)
    assert report['latched']['visibility'] == pytest.approx(rs.gaussian_visibility(4.65), abs=0.03)
    assert report['misidentification_ratio'] > 10
    assert report['standard']['count'].sum() == 10000


def test_closed_form_misidentification_ratio():
    """latched 模式的誤判率約為 standard 的 1/15"""
    standard = 1 - rs.optimal_threshold(SensorParams(), 'standard').f_m
    latched = 1 - rs.optimal_threshold(SensorParams(), 'latched').f_m
    assert standard / latched == pytest.approx(15.0, rel=0.05)


def test_simulate_shots_is_deterministic():
    first = rs.simulate_shots(SensorParams(), 'latched', 200, seed=5)
    assert first == rs.simulate_shots(SensorParams(), 'latched', 200, seed=5)
    assert first != rs.simulate_shots(SensorParams(), 'latched', 200, seed=6)
    with pytest.raises(ReadoutError):
        rs.simulate_shots(SensorParams(), 'pulsed', 10, seed=5)


def test_histogram_counts_every_value():
    centers, counts = rs.histogram([0.0, 0.1, 0.5, 1.0], 4)
    assert len(centers) == 4
    assert counts.sum() == 4
    with pytest.raises(ReadoutError):
        rs.histogram([], 4)
    with pytest.raises(ReadoutError):
        rs.histogram([1.0, 2.0], 1)


def test_visibility_requires_both_outcomes():
    shots = [ShotRecord('triplet', 3.0, 'triplet'), ShotRecord('triplet', 0.1, 'singlet')]
    with pytest.raises(ReadoutError):
        rs.visibility(shots)
    shots.append(ShotRecord('singlet', 0.0, 'singlet'))
    assert rs.visibility(shots).visibility == pytest.approx(0.5)


def test_sample_current_rejects_unknown_outcome():
    rng = rs.shot_rng(1, 0)
    with pytest.raises(ReadoutError):
        rs.sample_current('doublet', 'standard', SensorParams(), rng)
    assert isinstance(rs.sample_current('triplet', 'standard', SensorParams(), rng), float)
