# conftest.py
# 測試共用 fixture（測試設定、預設參數、較粗的演化步長）

import os

os.environ.setdefault('QDSIM_ENV', 'testing')

import pytest

from app import create_app
from app.models import DeviceParams, EvolveOptions, ProtocolParams


@pytest.fixture(scope='session', autouse=True)
def settings():
    """整個測試階段使用 TestingConfig"""
    return create_app('testing')


@pytest.fixture
def params():
    return DeviceParams()


@pytest.fixture
def fast_opts():
    """每步相位 0.2 rad，單元測試的速度優先"""
    return EvolveOptions(max_phase_per_step=0.2)


@pytest.fixture
def short_protocol():
    """縮短準備斜坡的實驗流程（只在模型界限內運作）"""
    return ProtocolParams(eps_prep=150.0, prep_ramp=20.0, crossing_ramp=1.0, plunge=1.0, esr_duration=500.0)
