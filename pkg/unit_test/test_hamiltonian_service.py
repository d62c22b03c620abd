# test_hamiltonian_service.py
# 五能階／四能階 Hamiltonian 與解析量 θ、J、t_c、Δ

import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from app.errors import ModelError
from app.models import DeviceParams, BASIS_5, Hamiltonian
from app.services import hamiltonian_service as hs
from app.utils.units import to_frequency


device_params = st.builds(
    DeviceParams,
    tc0=st.floats(0.01, 5.0),
    tc_decay=st.floats(50.0, 5000.0),
    delta11=st.floats(0.0, 10.0),
    g2=st.floats(1.9, 2.1),
    b0z=st.floats(-500.0, 500.0),
)
detuning = st.floats(-250.0, 250.0)


@given(device_params, detuning)
def test_h5_is_hermitian(p, eps):
    h = hs.build_h5(p, eps)
    assert h.basis == BASIS_5
    assert h.is_hermitian()


@settings(max_examples=50)
@given(device_params, detuning)
def test_eigensystem_residual(p, eps):
    h = hs.build_h5(p, eps)
    es = hs.eigensystem(h)
    assert np.all(np.diff(es.values) >= 0)
    for k in range(5):
        residual = h.matrix @ es.vector(k) - es.values[k] * es.vector(k)
        assert np.linalg.norm(residual) < 1e-9
    assert np.allclose(es.vectors.conj().T @ es.vectors, np.eye(5), atol=1e-10)


def test_eigensystem_rejects_non_hermitian():
    with pytest.raises(ModelError):
        hs.eigensystem(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_hamiltonian_rejects_non_hermitian_matrix():
    matrix = np.zeros((5, 5), dtype=complex)
    matrix[0, 1] = 1.0
    with pytest.raises(ModelError):
        Hamiltonian(matrix=matrix, basis=BASIS_5)
    matrix[1, 0] = 1.0
    assert Hamiltonian(matrix=matrix, basis=BASIS_5).is_hermitian()


def test_theta_at_zero_detuning(params):
    assert hs.theta(params, 0.0) == pytest.approx(-math.pi / 2)
    assert hs.delta_theta(params, 0.0) == pytest.approx(params.delta11 * math.cos(math.pi / 4))


def test_tunnel_coupling_decay(params):
    assert hs.tunnel_coupling(params, -50.0) == pytest.approx(params.tc0)
    assert hs.tunnel_coupling(params, 600.0) == pytest.approx(params.tc0 / math.e)
    constant = params.with_updates(tc_decay=math.inf)
    assert hs.tunnel_coupling(constant, 600.0) == pytest.approx(params.tc0)


def test_exchange_asymptote(params):
    """ε ≫ t_c 時 J → t_c²/f_ε"""
    eps = np.linspace(160.0, 250.0, 10)
    tc = hs.tunnel_coupling(params, eps)
    ratio = hs.exchange_j(params, eps) * to_frequency(eps) / tc ** 2
    assert np.all(np.abs(ratio - 1.0) < 5e-3)


def test_exchange_positive_and_decreasing(params):
    j = hs.exchange_j(params, np.linspace(-250.0, 250.0, 501))
    assert np.all(j > 0)
    assert np.all(np.diff(j) < 0)


def test_state_gap_equals_exchange_at_zero_field():
    p = DeviceParams(b0z=0.0, b_offset=0.0, delta11=0.0)
    for eps in (-50.0, 0.0, 100.0):
        assert hs.state_gap(p, eps, 'S_T0') == pytest.approx(hs.exchange_j(p, eps), rel=1e-9, abs=1e-10)


def test_funnel_locus():
    p = DeviceParams(b0z=200.0)
    locus = hs.funnel_locus(p)
    assert hs.exchange_j(p, locus) == pytest.approx(abs(hs.zeeman_mean(p)), rel=1e-9)
    assert hs.funnel_locus(DeviceParams(b0z=0.0, b_offset=0.0)) is None


def test_crossing_triplet_follows_field_sign(params):
    assert hs.crossing_triplet(params.with_updates(b0z=200.0), 'S_T-') == hs.TM
    # 預設 B_0^z = 0 時淨場為 B_OS = −1.04 mT
    assert hs.crossing_triplet(params, 'S_T-') == hs.TP
    assert hs.crossing_triplet(params, 'S_T0') == hs.T0
    with pytest.raises(ModelError):
        hs.crossing_triplet(params, 'S_S')


def test_effective_h4_matches_five_level_gap():
    p = DeviceParams(b0z=200.0)
    h4 = hs.effective_h4(p, 100.0)
    assert h4.is_hermitian()
    values = np.linalg.eigvalsh(h4.matrix)
    assert values[2] - values[1] == pytest.approx(hs.state_gap(p, 100.0, 'S_T0'), rel=1e-4)


def test_effective_h4_forms_differ_at_zero_detuning():
    p = DeviceParams(b0z=200.0)
    projected = hs.effective_h4(p, 0.0, 'projected')
    cos_theta = hs.effective_h4(p, 0.0, 'cos_theta')
    assert abs(cos_theta.matrix[1, 3]) < 1e-12
    assert abs(projected.matrix[1, 3]) > 0
    with pytest.raises(ModelError):
        hs.effective_h4(p, 0.0, 'exact')


def test_product_basis_transform():
    transform = hs.product_basis_transform()
    assert transform.shape == (4, 5)
    assert np.allclose(transform @ transform.conj().T, np.eye(4))
    assert np.allclose(transform[:, hs.S02], 0.0)


def test_check_validity(params, caplog):
    hs._warn_validity.cache_clear()
    caplog.set_level(logging.WARNING)
    assert hs.check_validity(params, [-100.0, 200.0])
    assert not hs.check_validity(params, 300.0)
    assert '300.0' in caplog.text
