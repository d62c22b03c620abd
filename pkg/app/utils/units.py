# units.py
# 物理常數表與單位換算工具（內部能量一律以 E/h 的 GHz 表示，時間以 ns 表示）

import math
import re
from typing import Tuple

from app.errors import ModelError


# ==================== 物理常數 ====================

# CODATA：h = 4.135667696 µeV / GHz
PLANCK_UEV_PER_GHZ = 4.135667696

# CODATA：µ_B / h = 13.9962449 GHz / T
BOHR_GHZ_PER_TESLA = 13.9962449
BOHR_GHZ_PER_MT = BOHR_GHZ_PER_TESLA * 1e-3

# GHz/ns → Hz/s
GHZ_PER_NS_TO_HZ_PER_S = 1e18


# ==================== 單位表 ====================

# 每個量的種類對應到「內部標準單位」的倍率
UNIT_TABLE = {
    'frequency': {'Hz': 1e-9, 'kHz': 1e-6, 'MHz': 1e-3, 'GHz': 1.0},
    'energy': {'neV': 1e-3, 'µeV': 1.0, 'ueV': 1.0, 'meV': 1e3, 'eV': 1e6},
    'field': {'T': 1e3, 'mT': 1.0, 'µT': 1e-3, 'uT': 1e-3},
    'time': {'ps': 1e-3, 'ns': 1.0, 'µs': 1e3, 'us': 1e3, 'ms': 1e6, 's': 1e9},
    'current': {'fA': 1e-3, 'pA': 1.0, 'nA': 1e3},
    'angle': {'rad': 1.0, 'deg': math.pi / 180.0},
    'velocity': {'Hz/s': 1.0},
    'dimensionless': {'': 1.0},
}

# 標準單位名稱（序列化時使用）
CANONICAL_UNIT = {
    'frequency': 'GHz',
    'energy': 'µeV',
    'field': 'mT',
    'time': 'ns',
    'current': 'pA',
    'angle': 'rad',
    'velocity': 'Hz/s',
    'dimensionless': '',
}

_QUANTITY_RE = re.compile(r'^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?inf)\s*([^\s\d].*)?\s*$')


def to_frequency(energy_uev: float) -> float:
    """µeV → GHz（f = E / h）"""
    return energy_uev / PLANCK_UEV_PER_GHZ


def to_energy(frequency_ghz: float) -> float:
    """GHz → µeV，to_frequency 的反函數"""
    return frequency_ghz * PLANCK_UEV_PER_GHZ


def zeeman_frequency(g: float, field_mt: float) -> float:
    """g·µ_B·B/h，單位 GHz"""
    return g * BOHR_GHZ_PER_MT * field_mt


def split_quantity(text: str) -> Tuple[float, str]:
    """
    拆解 "1.864 GHz" 這類字串

    Args:
        text: 數值 + 單位的字串

    Returns:
        (數值, 單位字串)；無單位時單位為空字串

    Raises:
        ModelError: 無法解析數值
    """
    match = _QUANTITY_RE.match(str(text))
    if not match:
        raise ModelError(f"無法解析物理量：{text!r}")
    value = float(match.group(1))
    unit = (match.group(2) or '').strip()
    return value, unit


def parse_quantity(text, kind: str, name: str = '', unit: str = None) -> float:
    """
    將帶單位的字串換算成指定種類的數值

    Args:
        text: 例如 "1.864 GHz"、"30µeV"；dimensionless 可直接給數字
        kind: UNIT_TABLE 的鍵
        name: 欄位名稱（錯誤訊息用）
        unit: 目標單位（預設為該種類的標準單位）；與輸入單位相同時數值不經換算

    Returns:
        以目標單位表示的浮點數

    Raises:
        ModelError: 缺少單位或單位不屬於該種類
    """
    table = UNIT_TABLE[kind]
    unit = CANONICAL_UNIT[kind] if unit is None else unit
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        if kind == 'dimensionless':
            return float(text)
        raise ModelError(f"{name or kind} 必須附上單位（例如 \"1.0 {unit}\"）")

    value, given = split_quantity(text)
    if given not in table:
        if not given:
            raise ModelError(f"{name or kind} 缺少單位：{text!r}")
        raise ModelError(f"{name or kind} 的單位不符：{given!r}（可用：{', '.join(u for u in table if u)}）")
    if table[given] == table[unit]:
        return value
    return value * table[given] / table[unit]


def format_quantity(value: float, kind: str, unit: str = None) -> str:
    """以指定單位（預設標準單位）輸出字串，parse_quantity 的反向操作"""
    unit = CANONICAL_UNIT[kind] if unit is None else unit
    if kind == 'dimensionless':
        return repr(float(value))
    return f"{float(value)!r} {unit}"
