# readout_service.py
# 唯象的 latched Pauli 自旋阻塞讀出：感測電流取樣、直方圖、閾值、保真度與可見度

import logging
import math
from typing import Dict, List, NamedTuple, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.special import erf
from scipy.stats import norm

from app.errors import ReadoutError
from app.models import SensorParams, ShotRecord, OUTCOMES, READOUT_MODES
from app.services.noise_service import shot_rng

logger = logging.getLogger(__name__)


class Threshold(NamedTuple):
    threshold: float
    fidelity_singlet: float
    fidelity_triplet: float
    f_m: float


class Visibility(NamedTuple):
    visibility: float
    false_singlet_rate: float
    false_triplet_rate: float


# ==================== 電流取樣 ====================

def sample_currents(outcomes: np.ndarray, mode: str, sensor: SensorParams,
                    rng: np.random.Generator) -> np.ndarray:
    """
    批次取樣感測電流（pA）

    Args:
        outcomes: 布林陣列，True 表示名目上為 triplet
        mode: 'standard' 或 'latched'
        sensor: 感測器參數
        rng: 亂數產生器

    Returns:
        與 outcomes 同形狀的電流
    """
    mu_singlet, mu_triplet = sensor.means(mode)
    outcomes = np.asarray(outcomes, dtype=bool)
    # 準備錯誤：名目 singlet 表現為 triplet
    effective = outcomes | (rng.random(outcomes.shape) < sensor.prep_error)
    if mode == 'latched':
        # latch 失敗：triplet 從 singlet 分佈取樣
        effective &= rng.random(outcomes.shape) < sensor.latch_success
    means = np.where(effective, mu_triplet, mu_singlet)
    return means + sensor.sigma_current * rng.standard_normal(outcomes.shape)


def sample_current(outcome: str, mode: str, sensor: SensorParams, rng: np.random.Generator) -> float:
    """單一 shot 的感測電流（pA）"""
    if outcome not in OUTCOMES:
        raise ReadoutError(f"未知的結果：{outcome}")
    if mode not in READOUT_MODES:
        raise ReadoutError(f"未知的讀出模式：{mode}")
    return float(sample_currents(np.array([outcome == 'triplet']), mode, sensor, rng)[0])


def simulate_shots(sensor: SensorParams, mode: str, n_shots: int, seed: int,
                   p_triplet: float = 0.5) -> List[ShotRecord]:
    """
    模擬 n_shots 個單發讀出：抽取真實結果、取樣電流、以最佳閾值分類
    """
    if mode not in READOUT_MODES:
        raise ReadoutError(f"未知的讀出模式：{mode}")
    rng = shot_rng(seed, READOUT_MODES.index(mode))
    truth = rng.random(n_shots) < p_triplet
    currents = sample_currents(truth, mode, sensor, rng)
    threshold = optimal_threshold(sensor, mode).threshold
    mu_singlet, mu_triplet = sensor.means(mode)
    above = currents > threshold if mu_triplet >= mu_singlet else currents < threshold
    return [ShotRecord(true_outcome='triplet' if t else 'singlet', current=float(c),
                       classified='triplet' if a else 'singlet')
            for t, c, a in zip(truth, currents, above)]


# ==================== 直方圖 ====================

def histogram(values: Sequence[float], n_bins: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    等寬分箱於 [min, max]

    Returns:
        (bin 中心, 計數)

    Raises:
        ReadoutError: 空輸入或 n_bins < 2
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ReadoutError("直方圖輸入為空")
    if n_bins < 2:
        raise ReadoutError(f"n_bins 必須 ≥ 2（目前 {n_bins}）")
    counts, edges = np.histogram(values, bins=n_bins, range=(values.min(), values.max()))
    return 0.5 * (edges[:-1] + edges[1:]), counts


# ==================== 閾值與保真度 ====================

def density_crossing(mu_singlet: float, mu_triplet: float, sigma_singlet: float, sigma_triplet: float) -> float:
    """兩個 Gaussian 機率密度相等、且位於兩平均之間的電流"""
    if math.isclose(sigma_singlet, sigma_triplet):
        return 0.5 * (mu_singlet + mu_triplet)

    def difference(x):
        return norm.logpdf(x, mu_singlet, sigma_singlet) - norm.logpdf(x, mu_triplet, sigma_triplet)

    lo, hi = sorted((mu_singlet, mu_triplet))
    return float(brentq(difference, lo, hi))


def _error_rates(sensor: SensorParams, mode: str, threshold: float) -> Tuple[float, float]:
    """(singlet 誤判為 triplet, triplet 誤判為 singlet)，不含準備錯誤"""
    mu_singlet, mu_triplet = sensor.means(mode)
    sign = 1.0 if mu_triplet >= mu_singlet else -1.0
    sigma = sensor.sigma_current
    singlet_high = norm.sf(sign * (threshold - mu_singlet) / sigma)
    triplet_low = norm.cdf(sign * (threshold - mu_triplet) / sigma)
    if mode == 'latched':
        failure = 1.0 - sensor.latch_success
        triplet_low = sensor.latch_success * triplet_low + failure * (1.0 - singlet_high)
    return float(singlet_high), float(triplet_low)


def optimal_threshold(sensor: SensorParams, mode: str) -> Threshold:
    """
    使平均誤判率最小的閾值

    等寬 Gaussian 時為兩平均的中點；latch 失敗造成混合分佈時數值最小化。
    F_M = 1 − 平均誤判率；兩分佈相同時 F_M = 0.5 並發出警告
    """
    mu_singlet, mu_triplet = sensor.means(mode)
    if mu_singlet == mu_triplet:
        logger.warning(f"⚠️ {mode} 模式兩種結果的電流分佈相同，無法區分")
        return Threshold(mu_singlet, 0.5, 0.5, 0.5)

    if mode == 'latched' and sensor.latch_success < 1.0:
        lo, hi = sorted((mu_singlet, mu_triplet))
        result = minimize_scalar(lambda x: sum(_error_rates(sensor, mode, x)), bounds=(lo, hi), method='bounded')
        threshold = float(result.x)
    else:
        threshold = density_crossing(mu_singlet, mu_triplet, sensor.sigma_current, sensor.sigma_current)

    singlet_error, triplet_error = _error_rates(sensor, mode, threshold)
    f_m = 1.0 - 0.5 * (singlet_error + triplet_error)
    return Threshold(threshold, 1.0 - singlet_error, 1.0 - triplet_error, f_m)


def gaussian_visibility(separation_over_sigma: float) -> float:
    """等寬 Gaussian、中點閾值的可見度 erf(d/(2√2σ))"""
    return float(erf(separation_over_sigma / (2.0 * math.sqrt(2.0))))


def visibility(shots: Sequence[ShotRecord]) -> Visibility:
    """
    visibility = 1 − (假 singlet 率 + 假 triplet 率)

    Raises:
        ReadoutError: 只有單一種真實結果
    """
    truth = np.array([s.true_outcome == 'triplet' for s in shots], dtype=bool)
    called = np.array([s.classified == 'triplet' for s in shots], dtype=bool)
    if truth.size == 0 or truth.all() or not truth.any():
        raise ReadoutError("visibility 需要兩種真實結果都出現")
    false_singlet = float(np.mean(~called[truth]))
    false_triplet = float(np.mean(called[~truth]))
    return Visibility(1.0 - false_singlet - false_triplet, false_singlet, false_triplet)


def readout_report(sensor: SensorParams, n_shots: int, seed: int, n_bins: int = 60) -> Dict[str, dict]:
    """
    兩種模式的完整讀出統計

    Returns:
        {'standard': {...}, 'latched': {...}, 'misidentification_ratio': float}
    """
    report = {}
    for mode in READOUT_MODES:
        shots = simulate_shots(sensor, mode, n_shots, seed)
        currents = np.array([s.current for s in shots])
        centers, counts = histogram(currents, n_bins)
        threshold = optimal_threshold(sensor, mode)
        measured = visibility(shots)
        report[mode] = {
            'threshold': threshold.threshold,
            'f_m': threshold.f_m,
            'fidelity_singlet': threshold.fidelity_singlet,
            'fidelity_triplet': threshold.fidelity_triplet,
            'visibility': measured.visibility,
            'false_singlet_rate': measured.false_singlet_rate,
            'false_triplet_rate': measured.false_triplet_rate,
            'bin_center': centers,
            'count': counts,
        }
        logger.info(f"✅ {mode}：閾值 {threshold.threshold:.3f} pA，F_M = {threshold.f_m:.4f}，可見度 {measured.visibility:.4f}")

    errors = {mode: report[mode]['false_singlet_rate'] + report[mode]['false_triplet_rate'] for mode in READOUT_MODES}
    report['misidentification_ratio'] = errors['standard'] / errors['latched'] if errors['latched'] > 0 else math.inf
    return report
