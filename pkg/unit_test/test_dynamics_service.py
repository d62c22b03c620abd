# test_dynamics_service.py
# 時間演化：LZ 解析式、範數守恆、時間反轉、ESR Rabi、步數預算與絕熱準備

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from app.errors import ModelError, StepBudgetError
from app.models import DeviceParams, EvolveOptions, PulseSchedule, Segment
from app.services import dynamics_service as ds
from app.services import experiment_service as es
from app.services import hamiltonian_service as hs
from app.utils.units import to_frequency


def _round_trip_schedule():
    return PulseSchedule(segments=(
        Segment('ramp', -50.0, 50.0, 20.0),
        Segment('dwell', 50.0, 50.0, 30.0),
        Segment('ramp', 50.0, -50.0, 20.0),
    ))


# ==================== Landau-Zener ====================

@given(st.floats(1e3, 1e8), st.floats(0.01, 0.99))
def test_lz_velocity_inverts_probability(f_delta, probability):
    nu = ds.lz_velocity_for_probability(f_delta, probability)
    assert float(ds.landau_zener_probability(f_delta, nu)) == pytest.approx(probability, rel=1e-9)


def test_lz_velocity_rejects_probability_bounds():
    with pytest.raises(ModelError):
        ds.lz_velocity_for_probability(1e6, 1.0)


@pytest.mark.parametrize('probability', [0.05, 0.5, 0.9])
def test_two_level_sweep_matches_formula(probability):
    f_delta = 0.01672
    nu = ds.lz_velocity_for_probability(f_delta * 1e9, probability)
    numeric = ds.landau_zener_sweep(f_delta, nu, window=10000.0, steps_per_scale=100)
    assert numeric == pytest.approx(probability, abs=1e-3)


@pytest.mark.slow
def test_charge_anticrossing_sweep_in_five_levels():
    """B = 0、Δ = 0 時五能階退化成 (1,1)S–(0,2)S 二能階，以 t_c 為耦合"""
    p = DeviceParams(tc0=0.05, tc_decay=math.inf, delta11=0.0, b0z=0.0, b_offset=0.0)
    nu = ds.lz_velocity_for_probability(p.tc0 * 1e9, 0.5)
    span = 200.0 / 4.135667696
    duration = span / (nu / 1e18)
    schedule = PulseSchedule(segments=(Segment('ramp', -100.0, 100.0, duration),))
    result = ds.evolve(schedule, p, EvolveOptions(max_phase_per_step=0.2))
    assert abs(result.state.amplitudes[hs.S02]) ** 2 == pytest.approx(0.5, abs=1e-2)


def test_level_velocity_matches_crossing_slope():
    p = DeviceParams(b0z=200.0)
    locus, _, slope = es.crossing_geometry(p)
    seg = Segment('ramp', locus - 20.0, locus + 20.0, 100.0)
    assert ds.level_velocity(p, seg) == pytest.approx(abs(slope) * 0.4 * 1e18, rel=1e-3)
    with pytest.raises(ModelError):
        ds.level_velocity(p, Segment('dwell', 0.0, 0.0, 1.0))


def test_charge_adiabatic_duration(params):
    expected = to_frequency(508.0) * math.log(1e4) / (4 * math.pi ** 2 * 1.864 ** 2)
    assert ds.charge_adiabatic_duration(params, 408.0, -100.0) == pytest.approx(expected, rel=1e-9)
    assert ds.charge_adiabatic_duration(params, -100.0, 408.0) == pytest.approx(expected, rel=1e-9)
    with pytest.raises(ModelError):
        ds.charge_adiabatic_duration(params, -100.0, 408.0, tolerance=1.0)


# ==================== 傳播 ====================

@given(st.floats(1e-3, 100.0), st.floats(0.1, 1e4), st.floats(0.01, 0.2))
def test_steps_for_is_minimal(f_max, duration, max_phase):
    n = ds.steps_for(f_max, duration, max_phase)
    assert 2 * math.pi * f_max * duration / n <= max_phase * (1 + 1e-8)
    assert n == 1 or 2 * math.pi * f_max * duration / (n - 1) > max_phase


def test_evolve_preserves_norm(params, fast_opts):
    result = ds.evolve(_round_trip_schedule(), params, fast_opts)
    assert result.state.norm == pytest.approx(1.0, abs=1e-9)
    assert result.grid.total_steps > 3


def test_time_reversal_returns_conjugate_initial_state(params, fast_opts):
    schedule = _round_trip_schedule()
    forward = ds.evolve(schedule, params, fast_opts)
    backward = ds.evolve(ds.reverse_schedule(schedule, forward.state), params, fast_opts)
    initial = ds.ground_02s(params, schedule.eps_start).amplitudes
    assert backward.state.overlap(np.conj(initial)) > 1 - 1e-9


def test_trajectory_ends_at_final_state(params, fast_opts):
    schedule = _round_trip_schedule()
    final = ds.evolve(schedule, params, fast_opts).state.amplitudes
    traced = ds.evolve(schedule, params, EvolveOptions(max_phase_per_step=0.2, record_trajectory=True))
    assert traced.trajectory.shape == (traced.grid.total_steps, 5)
    assert traced.times[-1] == pytest.approx(schedule.duration)
    assert np.allclose(traced.trajectory[-1], final, atol=1e-9)


def test_step_budget_is_enforced(params):
    schedule = PulseSchedule(segments=(Segment('ramp', -100.0, 100.0, 100.0),))
    with pytest.raises(StepBudgetError):
        ds.compile(schedule, params, EvolveOptions(step_budget=10))


def test_dwell_is_single_exponential(params):
    grid = ds.compile(PulseSchedule(segments=(Segment('dwell', 0.0, 0.0, 1e5),)), params,
                      EvolveOptions(step_budget=1))
    assert grid.propagated_steps == 1


# ==================== ESR ====================

def _rabi_schedule(params, duration, amplitude):
    drive = Segment('drive', -50.0, -50.0, duration, drive_freq=hs.zeeman_mean(params), drive_amp=amplitude)
    return PulseSchedule(segments=(drive,), initial=(0, 0, 1, 0, 0))


def test_resonant_drive_flips_polarized_triplet():
    """Ω = 1 MHz 共振驅動 500 ns：T− 完全轉到 T+"""
    p = DeviceParams(g1=2.0, g2=2.0, delta11=0.0, b0z=150.0)
    full = ds.evolve(_rabi_schedule(p, 500.0, 1.0), p).state.amplitudes
    assert abs(full[hs.TP]) ** 2 == pytest.approx(1.0, abs=1e-9)

    half = ds.evolve(_rabi_schedule(p, 250.0, 1.0), p).state.populations()
    assert half['T+'] == pytest.approx(0.25, abs=1e-9)
    assert half['T0'] == pytest.approx(0.5, abs=1e-9)


@pytest.mark.slow
def test_lab_frame_agrees_with_rotating_frame():
    p = DeviceParams(g1=2.0, g2=2.0, delta11=0.0, b0z=19.04)
    schedule = _rabi_schedule(p, 250.0, 2.0)
    rotating = np.abs(ds.evolve(schedule, p, EvolveOptions(frame='rotating')).state.amplitudes) ** 2
    lab = np.abs(ds.evolve(schedule, p, EvolveOptions(frame='lab')).state.amplitudes) ** 2
    assert np.allclose(lab, rotating, atol=2e-2)


def test_rotating_hamiltonian_is_static_and_hermitian(params):
    seg = Segment('drive', 0.0, 0.0, 100.0, drive_freq=4.2, drive_amp=0.02)
    early = ds.esr_hamiltonian(params, seg, 0.0)
    late = ds.esr_hamiltonian(params, seg, 37.0)
    assert early.is_hermitian()
    assert np.allclose(early.matrix, late.matrix)
    with pytest.raises(ModelError):
        ds.esr_hamiltonian(params, Segment('dwell', 0.0, 0.0, 1.0), 0.0)


# ==================== 初始態與絕熱準備 ====================

def test_ground_02s_is_singlet_like(params):
    state = ds.ground_02s(params, -100.0)
    assert abs(state.amplitudes[hs.S02]) ** 2 > 0.99


def test_ground_antiparallel_label():
    p = DeviceParams(g2=2.05, b0z=200.0)
    label, state = ds.ground_antiparallel(p, 200.0)
    assert label == '↑↓'
    assert state.norm == pytest.approx(1.0)


def test_swap_time(params):
    p = params.with_updates(b0z=200.0)
    assert ds.swap_time(p, 50.0) == pytest.approx(1.0 / (2.0 * hs.state_gap(p, 50.0, 'S_T0')))


def test_instant_preparation_keeps_state(params):
    prepared = ds.adiabatic_prepare(params, 200.0, 0.0)
    assert prepared.schedule is None
    assert prepared.state.overlap(ds.ground_02s(params, params.protocol.eps_init).amplitudes) == pytest.approx(1.0)
    with pytest.raises(ModelError):
        ds.adiabatic_prepare(params, 200.0, -1.0)


def test_infinitely_slow_preparation_reaches_antiparallel_state():
    p = DeviceParams(g2=2.05, b0z=200.0, delta11=0.0)
    prepared = ds.adiabatic_prepare(p, 200.0, math.inf)
    assert prepared.diagnostics['antiparallel_fidelity'] > 0.95


def test_finite_ramp_preparation_diagnostics(fast_opts):
    p = DeviceParams(g2=2.05, b0z=200.0)
    prepared = ds.adiabatic_prepare(p, 200.0, 50.0, opts=fast_opts)
    assert prepared.diagnostics['singlet_adiabaticity'] < 0.1
    assert prepared.diagnostics['crossing_lz_probability'] > 0.99
    assert prepared.diagnostics['antiparallel_fidelity'] > 0.9
    assert prepared.schedule.duration == pytest.approx(50.0)


def test_shaped_ramp_is_continuous(params):
    p = params.with_updates(b0z=200.0)
    segments = ds.shaped_ramp(p, -100.0, 200.0, 100.0, 2.0, 5.0)
    assert len(segments) == 3
    assert sum(seg.duration for seg in segments) == pytest.approx(100.0)
    assert segments[1].duration == pytest.approx(2.0)
    PulseSchedule(segments=segments)
