# test_units.py
# 單位換算與物理量字串解析

import math

import pytest
from hypothesis import given, strategies as st

from app.errors import ModelError
from app.utils.units import (
    to_frequency, to_energy, zeeman_frequency, parse_quantity, format_quantity, split_quantity,
)

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)


def test_zeeman_frequency_at_150_mT():
    """g = 2、150 mT 的 Zeeman 頻率約為 4.199 GHz"""
    assert zeeman_frequency(2.0, 150.0) == pytest.approx(4.19887, abs=1e-5)


@given(finite)
def test_energy_frequency_inverse(value):
    assert to_energy(to_frequency(value)) == pytest.approx(value, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize('text, kind, expected', [
    ('1.864 GHz', 'frequency', 1.864),
    ('200 MHz', 'frequency', 0.2),
    ('30µeV', 'energy', 30.0),
    ('30 ueV', 'energy', 30.0),
    ('1 T', 'field', 1000.0),
    ('0.1 µs', 'time', 100.0),
    ('inf µeV', 'energy', math.inf),
])
def test_parse_quantity_canonical_units(text, kind, expected):
    assert parse_quantity(text, kind) == pytest.approx(expected)


def test_parse_quantity_target_unit_is_exact():
    assert parse_quantity('0.2 MHz', 'frequency', unit='MHz') == 0.2
    assert parse_quantity('200 kHz', 'frequency', unit='MHz') == pytest.approx(0.2)


def test_dimensionless_accepts_bare_numbers():
    assert parse_quantity(0.017, 'dimensionless') == 0.017


@pytest.mark.parametrize('text, kind', [
    (1.864, 'frequency'),
    ('3', 'energy'),
    ('3 mT', 'energy'),
    ('fast GHz', 'frequency'),
])
def test_parse_quantity_rejects(text, kind):
    with pytest.raises(ModelError):
        parse_quantity(text, kind, 'tc0')


def test_split_quantity():
    assert split_quantity('-1.04 mT') == (-1.04, 'mT')
    assert split_quantity('2.5') == (2.5, '')


@given(finite)
def test_format_then_parse_is_exact(value):
    for kind, unit in (('energy', None), ('frequency', 'MHz'), ('field', 'mT')):
        assert parse_quantity(format_quantity(value, kind, unit), kind, unit=unit) == value
