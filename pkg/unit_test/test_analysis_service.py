# test_analysis_service.py
# 參數反推：FFT 主頻、LZ 擬合與信賴區間涵蓋率、能隙模型、衰減與 Stueckelberg 相位

import math

import numpy as np
import pytest

from app.errors import FitError, ModelError
from app.models import DeviceParams, PulseSchedule, Segment
from app.services import analysis_service as analysis
from app.services import dynamics_service as ds
from app.services import experiment_service as es
from app.services import hamiltonian_service as hs

F_DELTA = 1.96e5
NU_HALF = 4 * math.pi ** 2 * F_DELTA ** 2 / math.log(2.0)


def _lz_data(seed, noise=0.01, amplitude=0.9, offset=0.05):
    nu = np.geomspace(NU_HALF / 30, NU_HALF * 30, 40)
    rng = np.random.default_rng(seed)
    return nu, analysis.lz_model(nu, F_DELTA, amplitude, offset) + noise * rng.standard_normal(nu.size)


# ==================== FFT ====================

def test_fft_peak_finds_sinusoid():
    dt = 0.5
    t = np.arange(128) * dt
    peak = analysis.fft_peak(np.cos(2 * math.pi * 0.123 * t), dt)
    assert peak.present
    assert peak.uncertainty == pytest.approx(1 / 64)
    assert abs(peak.frequency - 0.123) <= peak.uncertainty


def test_fft_peak_on_constant_series():
    assert not analysis.fft_peak(np.full(32, 0.4), 1.0).present


def test_fft_peak_rejects_short_or_bad_input():
    with pytest.raises(ModelError):
        analysis.fft_peak(np.zeros(7), 1.0)
    with pytest.raises(ModelError):
        analysis.fft_peak(np.zeros(16), 0.0)


# ==================== Landau-Zener ====================

def test_fit_lz_recovers_coupling():
    nu, p_t = _lz_data(seed=0)
    fit = analysis.fit_lz(nu, p_t)
    assert fit.converged
    assert fit.value('f_delta') == pytest.approx(F_DELTA, rel=0.05)
    assert fit.value('amplitude') == pytest.approx(0.9, abs=0.05)
    assert fit.ci_half_widths is not None and np.all(fit.ci_half_widths > 0)


@pytest.mark.slow
def test_fit_lz_interval_coverage():
    """200 組獨立雜訊下 95% 信賴區間涵蓋真值的比例"""
    covered = 0
    for seed in range(200):
        nu, p_t = _lz_data(seed)
        fit = analysis.fit_lz(nu, p_t, seed=seed)
        if fit.ci_half_widths is not None:
            covered += abs(fit.value('f_delta') - F_DELTA) <= fit.ci_half_widths[0]
    assert covered / 200 >= 0.88


def test_fit_lz_flat_data_is_not_converged():
    nu = np.geomspace(1e11, 1e14, 10)
    fit = analysis.fit_lz(nu, np.full(10, 0.3))
    assert not fit.converged
    assert 'no_curvature' in fit.flags


def test_fit_lz_input_checks():
    with pytest.raises(FitError):
        analysis.fit_lz([1e12, 2e12, 3e12], [0.5, 0.4, 0.3])
    with pytest.raises(ModelError):
        analysis.fit_lz([-1.0, 1e12, 2e12, 3e12, 4e12], [0.5, 0.4, 0.3, 0.2, 0.1])


# ==================== 能隙模型 ====================

def test_fit_gap_model_recovers_truth():
    truth = DeviceParams(tc0=1.864, tc_decay=600.0, g2=2.00043, b0z=200.0)
    prior = DeviceParams(tc0=1.6, tc_decay=500.0, g2=2.0003, b0z=200.0)
    eps = np.linspace(40.0, 1200.0, 30)
    gaps = hs.state_gaps(truth, eps, 'S_T0')
    fit = analysis.fit_gap_model(eps, gaps, prior)
    assert fit.converged
    assert fit.value('tc0') == pytest.approx(1.864, rel=1e-3)
    assert fit.diagnostics['tc_decay'] == pytest.approx(600.0, rel=1e-2)
    assert fit.value('delta_g') == pytest.approx(0.43e-3, rel=1e-2)
    assert fit.diagnostics['constant_tc_residual_ratio'] > 4


def test_fit_gap_model_flags_coupling_far_in_11():
    """ε 遠大於 t_c 時 J 消失，只剩 δg 可辨識"""
    truth = DeviceParams(b0z=200.0)
    prior = DeviceParams(tc0=1.6, tc_decay=500.0, g2=2.0003, b0z=200.0)
    eps = np.linspace(3000.0, 4000.0, 20)
    fit = analysis.fit_gap_model(eps, hs.state_gaps(truth, eps, 'S_T0'), prior)
    assert 'tc0_unidentifiable' in fit.flags
    assert 'delta_g_unidentifiable' not in fit.flags
    assert fit.value('delta_g') == pytest.approx(0.43e-3, rel=1e-2)


def test_fit_gap_model_flags_zeeman_difference_without_field():
    """零磁場時能隙與 δg 無關"""
    truth = DeviceParams(b0z=0.0, b_offset=0.0)
    prior = DeviceParams(tc0=1.6, tc_decay=500.0, g2=2.0003, b0z=0.0, b_offset=0.0)
    eps = np.linspace(-20.0, 80.0, 25)
    fit = analysis.fit_gap_model(eps, hs.state_gaps(truth, eps, 'S_T0'), prior)
    assert 'delta_g_unidentifiable' in fit.flags
    assert 'tc0_unidentifiable' not in fit.flags
    assert fit.value('tc0') == pytest.approx(1.864, rel=1e-2)


def test_fit_gap_model_input_checks(params):
    with pytest.raises(ModelError):
        analysis.fit_gap_model([1.0, 2.0], [0.1], params)
    with pytest.raises(FitError):
        analysis.fit_gap_model([1.0, 2.0, 3.0], [0.1, 0.2, 0.3], params)


# ==================== 衰減振盪 ====================

def test_fit_decay_gaussian_envelope():
    tau = np.arange(200) * 0.5
    p_t = 0.5 + 0.4 * np.cos(2 * math.pi * 0.1 * tau) * np.exp(-(tau / 60.0) ** 2)
    fit = analysis.fit_decay(tau, p_t)
    assert fit.converged
    assert fit.diagnostics['exponent'] == 2.0
    assert fit.value('frequency') == pytest.approx(0.1, rel=1e-4)
    assert fit.diagnostics['decay_time'] == pytest.approx(60.0, rel=1e-3)
    assert fit.diagnostics['pi_time'] == pytest.approx(5.0, rel=1e-4)
    assert fit.diagnostics['f_pi'] == pytest.approx(0.5 * (1 + math.exp(-(5.0 / 60.0) ** 2)), rel=1e-4)


def test_fit_decay_without_decay():
    tau = np.arange(200) * 0.5
    p_t = 0.5 + 0.4 * np.cos(2 * math.pi * 0.1 * tau + 0.3)
    fit = analysis.fit_decay(tau, p_t)
    assert 'no_decay' in fit.flags
    assert fit.diagnostics['decay_time'] == math.inf
    assert fit.diagnostics['f_pi'] == 1.0


def test_fit_decay_requires_two_visible_oscillations():
    """2T 內不到兩個週期時拒絕擬合"""
    tau = np.arange(128) * 0.25
    p_t = 0.5 + 0.4 * np.cos(2 * math.pi * 0.2 * tau) * np.exp(-tau / 4.0)
    with pytest.raises(ModelError):
        analysis.fit_decay(tau, p_t)


def test_fit_decay_without_oscillation():
    fit = analysis.fit_decay(np.arange(64) * 1.0, np.full(64, 0.2))
    assert 'frequency_absent' in fit.flags
    assert not fit.converged


# ==================== Stueckelberg 相位 ====================

def test_stokes_phase_limits():
    assert analysis.stokes_phase(0.0, 1e12) == pytest.approx(math.pi / 4)
    f = 1e6
    nu = 2 * math.pi * f ** 2 / 50.0
    assert abs(analysis.stokes_phase(f, nu)) < 0.01


def test_stueckelberg_phase_of_dwell():
    p = DeviceParams(b0z=200.0)
    schedule = PulseSchedule(segments=(Segment('dwell', 40.0, 40.0, 10.0),))
    expected = 2 * math.pi * hs.state_gap(p, 40.0, 'S_T0') * 10.0
    assert analysis.stueckelberg_phase(p, schedule, 'S_T0') == pytest.approx(expected, rel=1e-12)


def test_predicted_fringes_are_spaced_by_gap_period():
    p = DeviceParams(b0z=50.0, delta11=5.0)
    _, f_delta, _ = es.crossing_geometry(p)
    velocity = ds.lz_velocity_for_probability(f_delta * 1e9, 0.5)
    taus = analysis.predict_fringe_taus(p, lambda tau: es.lzs_schedule(p, 30.0, tau, velocity), 30.0, velocity)
    period = 1.0 / hs.state_gap(p, 30.0, 'S_T-')
    assert len(taus) == 5
    assert 0.0 <= taus[0] < period
    assert np.allclose(np.diff(taus), period)


def test_fit_fringe_phase_recovers_offset():
    tau = np.linspace(0.0, 20.0, 100)
    p_t = 0.1 + 0.6 * np.sin(0.5 * (2 * math.pi * 0.2 * tau + 1.0)) ** 2
    fit = analysis.fit_fringe_phase(tau, p_t, 0.2)
    assert fit.value('phase') == pytest.approx(1.0, abs=1e-6)
    assert fit.value('amplitude') == pytest.approx(0.6, abs=1e-6)


# ==================== 信賴區間 ====================

def test_intervals_vanish_without_residuals():
    jacobian = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 2.0]])
    half, covariance, used = analysis.confidence_intervals(jacobian, np.zeros(4))
    assert used == 'linear'
    assert np.allclose(half, 0.0)
    assert covariance.shape == (2, 2)


def test_identifiability_marks_missing_direction():
    jacobian = np.array([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
    half = analysis.identifiability(jacobian, np.zeros(3), np.ones(2), 1e-6)
    assert math.isinf(half[1])
    assert 0.0 < half[0] < 1e-5


def test_singular_jacobian_without_refit_gives_infinite_intervals():
    jacobian = np.array([[1.0, 1.0], [1.0, 1.0], [2.0, 2.0]])
    half, covariance, used = analysis.confidence_intervals(jacobian, np.ones(3))
    assert used == 'none'
    assert covariance is None
    assert np.all(np.isinf(half))
