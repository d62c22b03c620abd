# hamiltonian_service.py
# 五能階與有效四能階 Hamiltonian、本徵解，以及 θ、J(ε)、t_c(ε)、Δ(θ) 等解析量

import logging
import math
from functools import lru_cache
from typing import Optional, Union

import numpy as np
from scipy.optimize import brentq

from app.errors import ModelError
from app.models import DeviceParams, Hamiltonian, EigenSystem, BASIS_4, BASIS_5
from app.utils.units import to_frequency, zeeman_frequency

logger = logging.getLogger(__name__)

# 基底索引
TP, T0, TM, S11, S02 = range(5)

WHICH_GAPS = ('S_T0', 'S_T-')


# ==================== 解析量 ====================

def _detuning(params: DeviceParams, eps):
    """名目 ε 加上準靜態偏移"""
    return eps + params.eps_offset


def tunnel_coupling(params: DeviceParams, eps):
    """
    t_c(ε) = tc0·exp(−max(ε,0)/ε₀)，tc_decay 為 inf 時為常數

    Args:
        params: 裝置參數
        eps: 失諧（µeV），可為 numpy 陣列

    Returns:
        t_c（GHz）
    """
    eps = _detuning(params, np.asarray(eps, dtype=float))
    if math.isinf(params.tc_decay):
        result = np.full_like(eps, params.tc0)
    else:
        result = params.tc0 * np.exp(-np.maximum(eps, 0.0) / params.tc_decay)
    return float(result) if result.ndim == 0 else result


def mixing_angle(tc, eps):
    """θ = −atan2(2·t_c, f_ε)，範圍 (−π, 0)"""
    return -np.arctan2(2.0 * np.asarray(tc, dtype=float), to_frequency(np.asarray(eps, dtype=float)))


def _exchange_from(f_eps, tc):
    # f ≥ 0 時改寫成 tc²/(√(f²/4+tc²)+f/2) 避免大 ε 的相消誤差
    root = np.sqrt(0.25 * f_eps ** 2 + tc ** 2)
    return np.where(f_eps >= 0, tc ** 2 / (root + 0.5 * np.abs(f_eps)), root - 0.5 * f_eps)


def exchange_j(params: DeviceParams, eps):
    """J(ε) = √(f_ε²/4 + t_c(ε)²) − f_ε/2（GHz），恆為正"""
    eps = np.asarray(eps, dtype=float)
    f_eps = to_frequency(_detuning(params, eps))
    result = _exchange_from(f_eps, np.asarray(tunnel_coupling(params, eps)))
    return float(result) if result.ndim == 0 else result


def theta(params: DeviceParams, eps):
    """在 ε 處（含偏移）的混合角"""
    eps = np.asarray(eps, dtype=float)
    result = mixing_angle(tunnel_coupling(params, eps), _detuning(params, eps))
    return float(result) if np.ndim(result) == 0 else result


def delta_theta(params: DeviceParams, eps):
    """Δ(θ) = delta11·cos(θ/2)（MHz），只經由 S_H 的 (1,1)S 成分耦合"""
    result = params.delta11 * np.cos(0.5 * np.asarray(theta(params, eps)))
    return float(result) if np.ndim(result) == 0 else result


def zeeman_mean(params: DeviceParams) -> float:
    """Ē_Z = ḡ·µ_B·(B_0^z + B_OS)/h（GHz）"""
    return zeeman_frequency(params.g_mean, params.net_field)


def zeeman_difference(params: DeviceParams) -> float:
    """δE_Z = (g2 − g1)·µ_B·(B_0^z + B_OS)/h（GHz）"""
    return zeeman_frequency(params.delta_g, params.net_field)


def net_field(params: DeviceParams) -> float:
    return params.net_field


# ==================== 適用範圍 ====================

def validity_bound(params: DeviceParams) -> float:
    """|ε| 的上限 E_C·valley_frac，單位 µeV"""
    return params.e_charging * 1e3 * params.valley_frac


@lru_cache(maxsize=4096)
def _warn_validity(eps: float, bound: float):
    logger.warning(f"⚠️ |ε| = {abs(eps):.1f} µeV 超出谷分裂界限 {bound:.1f} µeV，截斷到最低谷的模型可能失準")


def check_validity(params: DeviceParams, eps) -> bool:
    """超出界限時記錄警告（每個 ε 只警告一次），回傳是否在界限內"""
    bound = validity_bound(params)
    eps = np.atleast_1d(np.asarray(eps, dtype=float)) + params.eps_offset
    outside = eps[np.abs(eps) >= bound]
    for value in np.unique(np.round(outside, 6))[:8]:
        _warn_validity(float(value), bound)
    return outside.size == 0


# ==================== Hamiltonian ====================

def product_basis_transform() -> np.ndarray:
    """
    耦合基底 → 乘積基底 {↑↑, ↑↓, ↓↑, ↓↓} 的 4×5 轉換矩陣

    ψ_product = B @ ψ_coupled；(0,2)S 欄為零
    """
    r = 1.0 / math.sqrt(2.0)
    transform = np.zeros((4, 5), dtype=complex)
    transform[0, TP] = 1.0
    transform[1, T0] = r
    transform[2, T0] = r
    transform[3, TM] = 1.0
    transform[1, S11] = r
    transform[2, S11] = -r
    return transform


def assemble_h5(f_eps, tc, ez_mean, ez_diff, delta) -> np.ndarray:
    """
    由原始量組出五能階矩陣（參數可為逐點陣列）

    Args:
        f_eps: 失諧頻率（GHz）
        tc: 穿隧耦合（GHz）
        ez_mean: Ē_Z（GHz）
        ez_diff: δE_Z（GHz）
        delta: Δ₁₁（GHz）

    Returns:
        形狀 (n, 5, 5) 的複數陣列
    """
    f_eps, tc, ez_mean, ez_diff, delta = np.broadcast_arrays(
        *(np.atleast_1d(np.asarray(x, dtype=float)) for x in (f_eps, tc, ez_mean, ez_diff, delta)))
    matrices = np.zeros((f_eps.size, 5, 5), dtype=complex)
    half = 0.5 * f_eps
    matrices[:, TP, TP] = -half + ez_mean
    matrices[:, T0, T0] = -half
    matrices[:, TM, TM] = -half - ez_mean
    matrices[:, S11, S11] = -half
    matrices[:, S02, S02] = half
    matrices[:, S11, S02] = matrices[:, S02, S11] = tc
    # 分裂等於 δE_Z
    matrices[:, T0, S11] = matrices[:, S11, T0] = -0.5 * ez_diff
    matrices[:, TP, S11] = matrices[:, S11, TP] = delta
    matrices[:, TM, S11] = matrices[:, S11, TM] = -delta
    return matrices


def h5_matrices(params: DeviceParams, eps) -> np.ndarray:
    """
    一次建立多個 ε 的五能階矩陣

    Args:
        params: 裝置參數
        eps: 失諧陣列（µeV）

    Returns:
        形狀 (n, 5, 5) 的複數陣列（GHz）
    """
    eps = np.atleast_1d(np.asarray(eps, dtype=float))
    return assemble_h5(to_frequency(_detuning(params, eps)), tunnel_coupling(params, eps),
                       zeeman_mean(params), zeeman_difference(params), params.delta11 * 1e-3)


def build_h5(params: DeviceParams, eps: float) -> Hamiltonian:
    """在單一 ε（µeV）建立基底 {T+, T0, T−, (1,1)S, (0,2)S} 的五能階 Hamiltonian"""
    check_validity(params, eps)
    return Hamiltonian(matrix=h5_matrices(params, eps)[0], basis=BASIS_5)


def effective_h4(params: DeviceParams, eps: float, form: str = 'projected') -> Hamiltonian:
    """
    有效四能階 Hamiltonian，基底 {T+, T0, T−, S_H}

    Args:
        params: 裝置參數
        eps: 失諧（µeV）
        form: 'projected' 時 T0–S_H 為 (δE_Z/2)·cos(θ/2)（由五能階投影而來）；
              'cos_theta' 時使用 cosθ 權重

    Returns:
        Hamiltonian(4)；只有能隙有物理意義

    Raises:
        ModelError: 未知的 form
    """
    if form not in ('projected', 'cos_theta'):
        raise ModelError(f"未知的 effective_h4 形式：{form}")

    f_eps = to_frequency(eps + params.eps_offset)
    angle = theta(params, eps)
    j = exchange_j(params, eps)
    ez_mean = zeeman_mean(params)
    ez_diff = zeeman_difference(params)
    delta = delta_theta(params, eps) * 1e-3
    weight = math.cos(0.5 * angle) if form == 'projected' else math.cos(angle)

    matrix = np.diag([ez_mean - 0.5 * f_eps, -0.5 * f_eps, -ez_mean - 0.5 * f_eps, -0.5 * f_eps - j]).astype(complex)
    matrix[0, 3] = matrix[3, 0] = delta
    matrix[1, 3] = matrix[3, 1] = -0.5 * ez_diff * weight
    matrix[2, 3] = matrix[3, 2] = -delta
    return Hamiltonian(matrix=matrix, basis=BASIS_4)


# ==================== 本徵解 ====================

def _fix_phases(vectors: np.ndarray) -> np.ndarray:
    """讓每個本徵向量絕對值最大的分量為正實數"""
    peak = np.argmax(np.abs(vectors), axis=-2)
    pivots = np.take_along_axis(vectors, peak[..., None, :], axis=-2)
    return vectors * (np.abs(pivots) / pivots)


def eigensystem(h: Union[Hamiltonian, np.ndarray]) -> EigenSystem:
    """
    Hermitian 矩陣的遞增本徵值與正交本徵向量

    Raises:
        ModelError: 輸入不是 Hermitian
    """
    matrix = h.matrix if isinstance(h, Hamiltonian) else np.asarray(h, dtype=complex)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ModelError(f"eigensystem 需要方陣，收到形狀 {matrix.shape}")
    if not np.allclose(matrix, matrix.conj().T, rtol=0.0, atol=1e-12):
        raise ModelError("eigensystem 的輸入不是 Hermitian 矩陣")
    values, vectors = np.linalg.eigh(matrix)
    basis = h.basis if isinstance(h, Hamiltonian) else (BASIS_5 if matrix.shape[0] == 5 else BASIS_4)
    return EigenSystem(values=values, vectors=_fix_phases(vectors), basis=basis)


def singlet_hybrid(params: DeviceParams, eps) -> np.ndarray:
    """Δ、δE_Z 皆為零時的 S_H 向量（五能階基底）"""
    half = 0.5 * np.asarray(theta(params, eps))
    vector = np.zeros(np.shape(half) + (5,), dtype=complex)
    vector[..., S11] = np.cos(half)
    vector[..., S02] = np.sin(half)
    return vector


def crossing_triplet(params: DeviceParams, which: str) -> int:
    """
    which 對應的三重態索引

    'S_T-' 指與 S_H 交叉的極化三重態：Ē_Z ≥ 0 時為 T−，淨場反向時為 T+
    """
    if which == 'S_T0':
        return T0
    if which == 'S_T-':
        return TM if zeeman_mean(params) >= 0 else TP
    raise ModelError(f"未知的能隙種類：{which}（可用 {', '.join(WHICH_GAPS)}）")


def diabatic_gap(params: DeviceParams, eps, which: str):
    """不含 Δ、δE_Z 混合的能隙 E_{S_H} − E_T（GHz）"""
    j = np.asarray(exchange_j(params, eps))
    if crossing_triplet(params, which) == T0:
        result = -j
    else:
        result = abs(zeeman_mean(params)) - j
    return float(result) if result.ndim == 0 else result


def gaps_from_matrices(matrices: np.ndarray, angles: np.ndarray, index: int) -> np.ndarray:
    """
    從五能階矩陣批次取出 S_H 類態與三重態 index 之間的本徵能隙

    取在 span{T, S_H} 上權重最大的兩個本徵態，回傳其能量差（GHz，非負）
    """
    values, vectors = np.linalg.eigh(matrices)
    half = 0.5 * np.atleast_1d(angles)
    weight_t = np.abs(vectors[:, index, :]) ** 2
    weight_s = np.abs(np.cos(half)[:, None] * vectors[:, S11, :] + np.sin(half)[:, None] * vectors[:, S02, :]) ** 2
    top = np.argsort(weight_t + weight_s, axis=1)[:, -2:]
    energies = np.take_along_axis(values, top, axis=1)
    return np.abs(energies[:, 1] - energies[:, 0])


def state_gaps(params: DeviceParams, eps, which: str) -> np.ndarray:
    """對一組 ε 計算 S_H 類態與三重態之間的精確本徵能隙（GHz）"""
    eps = np.atleast_1d(np.asarray(eps, dtype=float))
    index = crossing_triplet(params, which)
    return gaps_from_matrices(h5_matrices(params, eps), np.atleast_1d(theta(params, eps)), index)


def state_gap(params: DeviceParams, eps: float, which: str) -> float:
    """單一 ε 的 state_gaps"""
    return float(state_gaps(params, eps, which)[0])


def funnel_locus(params: DeviceParams) -> Optional[float]:
    """
    解 J(ε) = |Ē_Z| 的名目 ε（µeV）；淨場為零時沒有解，回傳 None
    """
    target = abs(zeeman_mean(params))
    if target == 0.0:
        return None

    def residual(eps):
        return exchange_j(params, eps) - target

    lo, hi = -1e3, 1e3
    while residual(lo) < 0 and lo > -1e8:
        lo *= 10.0
    while residual(hi) > 0 and hi < 1e8:
        hi *= 10.0
    if residual(lo) < 0 or residual(hi) > 0:
        logger.warning(f"⚠️ J(ε) = {target:.4g} GHz 在搜尋範圍內無解")
        return None
    return float(brentq(residual, lo, hi, xtol=1e-9, rtol=1e-12))
