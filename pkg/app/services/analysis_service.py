# analysis_service.py
# 由模擬資料反推 Hamiltonian 參數：FFT 頻譜、LZ 擬合、能隙模型擬合、衰減擬合與信賴區間

import logging
import math
from dataclasses import replace
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from scipy.integrate import trapezoid
from scipy.optimize import least_squares
from scipy.special import loggamma

from app.errors import FitError, ModelError
from app.models import DeviceParams, FitResult, PulseSchedule
from app.services import hamiltonian_service as hs
from app.utils.units import to_frequency, zeeman_frequency

logger = logging.getLogger(__name__)

CONFIDENCE = 0.95
BOOTSTRAP_MIN_REPS = 200
RANK_TOLERANCE = 1e-10
MIN_OSCILLATIONS = 2.0

# 能隙資料的量測解析度下限（GHz），無雜訊資料的可辨識性以此估計
GAP_RESOLUTION = 1e-6


class FftPeak(NamedTuple):
    frequency: float
    uncertainty: float
    present: bool
    amplitude: float


# ==================== FFT ====================

def fft_peak(series: Sequence[float], dt: float, pad_factor: int = 8) -> FftPeak:
    """
    去平均、加 Hann 窗後幅度譜的主頻（不含 DC），以對數幅度的三點拋物線內插細化

    Args:
        series: 等間隔時間序列
        dt: 取樣間隔（ns）
        pad_factor: 補零倍數

    Returns:
        FftPeak（頻率 GHz，不確定度為一個 bin 寬 1/(N·dt)）；找不到高於雜訊底的峰時 present = False

    Raises:
        ModelError: 少於 8 個點或 dt 不為正
    """
    values = np.asarray(series, dtype=float)
    if values.size < 8:
        raise ModelError(f"fft_peak 至少需要 8 個點（目前 {values.size}）")
    if not dt > 0:
        raise ModelError("dt 必須為正")

    n = values.size
    bin_width = 1.0 / (n * dt)
    centered = values - values.mean()
    if np.max(np.abs(centered)) < 1e-12:
        return FftPeak(math.nan, bin_width, False, 0.0)

    n_fft = 1 << int(math.ceil(math.log2(n * pad_factor)))
    magnitude = np.abs(np.fft.rfft(centered * np.hanning(n), n=n_fft))
    freqs = np.fft.rfftfreq(n_fft, dt)

    # 排除 DC 主瓣
    first = int(math.ceil(2 * n_fft / n))
    if first >= magnitude.size - 1:
        return FftPeak(math.nan, bin_width, False, 0.0)
    k = first + int(np.argmax(magnitude[first:]))
    peak = magnitude[k]
    floor = np.median(magnitude[first:])
    if peak <= 3.0 * floor:
        return FftPeak(math.nan, bin_width, False, float(peak))

    offset = 0.0
    if 0 < k < magnitude.size - 1 and min(magnitude[k - 1], magnitude[k + 1]) > 0:
        a, b, c = np.log(magnitude[k - 1:k + 2])
        denominator = 4 * b - 2 * a - 2 * c
        if denominator != 0:
            offset = (c - a) / denominator
    frequency = (k + offset) * freqs[1]
    return FftPeak(float(frequency), bin_width, True, float(peak))


def column_frequencies(values: np.ndarray, dt: float) -> List[FftPeak]:
    """PTMap 每一列（沿 axis2 的時間序列）的主頻"""
    return [fft_peak(row, dt) for row in np.asarray(values)]


# ==================== 擬合核心 ====================

def confidence_intervals(jacobian: np.ndarray, residuals: np.ndarray, method: str = 'linear',
                         refit: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                         fitted: Optional[np.ndarray] = None, n_boot: int = BOOTSTRAP_MIN_REPS,
                         seed: int = 0) -> Tuple[np.ndarray, Optional[np.ndarray], str]:
    """
    95% 信賴區間半寬

    linear：t_{0.975,dof}·√diag((JᵀJ)⁻¹·s²)，dof 大時趨近 1.96；
    bootstrap：以重抽殘差重新擬合（≥ 200 次），取 2.5%–97.5% 分位數的一半。
    JᵀJ 奇異時自動改用 bootstrap

    Args:
        jacobian: 最佳解的殘差 Jacobian（n × p）
        residuals: 最佳解的殘差
        method: 'linear' 或 'bootstrap'
        refit: bootstrap 用，refit(y_star) → 參數向量
        fitted: bootstrap 用，模型在最佳解的預測值

    Returns:
        (半寬, 共變異數矩陣或 None, 實際使用的方法)
    """
    n, p = jacobian.shape
    dof = max(n - p, 1)
    s2 = float(residuals @ residuals) / dof

    if method == 'linear':
        jtj = jacobian.T @ jacobian
        singular = np.linalg.svd(jacobian, compute_uv=False)
        if singular.size and singular[-1] > RANK_TOLERANCE * singular[0]:
            covariance = np.linalg.inv(jtj) * s2
            quantile = stats.t.ppf(0.5 + CONFIDENCE / 2, dof)
            return quantile * np.sqrt(np.clip(np.diag(covariance), 0.0, None)), covariance, 'linear'
        logger.warning("⚠️ JᵀJ 奇異，改用 bootstrap 信賴區間")

    if refit is None or fitted is None:
        return np.full(p, math.inf), None, 'none'

    n_boot = max(n_boot, BOOTSTRAP_MIN_REPS)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    samples = []
    for _ in range(n_boot):
        resampled = fitted - residuals[rng.integers(0, n, n)]
        try:
            samples.append(refit(resampled))
        except (FitError, ValueError, np.linalg.LinAlgError):
            continue
    if len(samples) < 2:
        return np.full(p, math.inf), None, 'bootstrap'
    samples = np.array(samples)
    lo, hi = np.percentile(samples, [50 * (1 - CONFIDENCE), 50 * (1 + CONFIDENCE)], axis=0)
    return 0.5 * (hi - lo), np.cov(samples, rowvar=False), 'bootstrap'


def identifiability(jacobian: np.ndarray, residuals: np.ndarray, values: np.ndarray,
                    resolution: float) -> np.ndarray:
    """
    每個參數的 95% 半寬，以相對尺度的 Jacobian SVD 計算

    殘差變異數不低於 resolution²；參數在零空間方向的權重超過 1e-6 時半寬為 inf
    """
    n, p = jacobian.shape
    dof = max(n - p, 1)
    s2 = max(float(residuals @ residuals) / dof, resolution ** 2)
    scale = np.maximum(np.abs(values), 1e-300)
    _, singular, vt = np.linalg.svd(jacobian * scale, full_matrices=False)
    if singular[0] > 0:
        keep = singular > RANK_TOLERANCE * singular[0]
    else:
        keep = np.zeros(singular.size, dtype=bool)
    null_loading = np.sum(vt[~keep] ** 2, axis=0)
    variance = np.sum(vt[keep] ** 2 / singular[keep, None] ** 2, axis=0) * s2
    half = stats.t.ppf(0.5 + CONFIDENCE / 2, dof) * np.sqrt(variance) * scale
    half[null_loading > 1e-6] = math.inf
    return half


def _solve(model: Callable[[np.ndarray], np.ndarray], y: np.ndarray, starts: Sequence[np.ndarray]):
    """多起點 Levenberg-Marquardt，回傳 cost 最小的解"""
    best = None
    for x0 in starts:
        try:
            result = least_squares(lambda p: model(p) - y, np.asarray(x0, dtype=float), method='lm',
                                   xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
        except (ValueError, FloatingPointError, np.linalg.LinAlgError) as e:
            logger.debug(f"起點 {x0} 擬合失敗：{e}")
            continue
        if not np.all(np.isfinite(result.fun)):
            continue
        if best is None or result.cost < best.cost:
            best = result
    return best


def fit_model(model: Callable[[np.ndarray], np.ndarray], y, starts: Sequence[np.ndarray],
              names: Tuple[str, ...], ci_method: str = 'linear', seed: int = 0) -> FitResult:
    """
    通用非線性最小平方擬合（多起點 LM）並附信賴區間

    Args:
        model: model(p) → 預測值
        y: 觀測值
        starts: 起點列表（≥ 1）
        names: 參數名稱

    Returns:
        FitResult；收斂失敗時 converged = False 且不附信賴區間
    """
    y = np.asarray(y, dtype=float)
    if y.size < len(names):
        raise FitError(f"資料點數 {y.size} 少於參數數 {len(names)}")

    best = _solve(model, y, starts)
    if best is None:
        logger.error(f"❌ 擬合 {names} 所有起點皆失敗")
        return FitResult(names=names, values=np.full(len(names), math.nan), ci_half_widths=None,
                         residual_norm=math.inf, converged=False, iterations=0, flags=['all_starts_failed'])

    flags = []
    singular = np.linalg.svd(best.jac, compute_uv=False)
    rank_deficient = not (singular.size and singular[-1] > RANK_TOLERANCE * singular[0])
    if rank_deficient:
        flags.append('rank_deficient')

    def refit(y_star):
        result = _solve(model, y_star, [best.x])
        if result is None:
            raise FitError("bootstrap 重新擬合失敗")
        return result.x

    half_widths, covariance, used = confidence_intervals(best.jac, best.fun, ci_method, refit=refit,
                                                         fitted=model(best.x), seed=seed)
    converged = best.status > 0
    return FitResult(names=names, values=best.x.copy(), ci_half_widths=half_widths if converged else None,
                     residual_norm=float(np.linalg.norm(best.fun)), converged=converged,
                     iterations=int(best.nfev), residuals=best.fun.copy(), covariance=covariance,
                     flags=flags, diagnostics={'ci_method': used}, jacobian=best.jac.copy())


def _starts(center: Sequence[float], spread: Sequence[float], n: int, seed: int) -> List[np.ndarray]:
    """以中心點加上乘性抖動產生 n 個起點（第一個為中心點）"""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    center = np.asarray(center, dtype=float)
    spread = np.asarray(spread, dtype=float)
    points = [center]
    for _ in range(n - 1):
        points.append(center + spread * rng.standard_normal(center.size))
    return points


def _rescale(fit: FitResult, names: Tuple[str, ...], scale: np.ndarray) -> FitResult:
    """將擬合變數乘上 scale 換回物理單位"""
    values = fit.values * scale
    half = None if fit.ci_half_widths is None else fit.ci_half_widths * np.abs(scale)
    covariance = None if fit.covariance is None else fit.covariance * np.outer(scale, scale)
    jacobian = None if fit.jacobian is None else fit.jacobian / scale
    return FitResult(names=names, values=values, ci_half_widths=half, residual_norm=fit.residual_norm,
                     converged=fit.converged, iterations=fit.iterations, residuals=fit.residuals,
                     covariance=covariance, flags=list(fit.flags), diagnostics=dict(fit.diagnostics),
                     jacobian=jacobian)


# ==================== Landau-Zener ====================

def lz_model(nu, f_delta_hz, amplitude, offset):
    """P_T = A·(1 − exp(−4π²f_Δ²/ν)) + B"""
    return amplitude * (1.0 - np.exp(-4.0 * math.pi ** 2 * f_delta_hz ** 2 / np.asarray(nu))) + offset


def fit_lz(nu, p_t, ci_method: str = 'linear', seed: int = 0) -> FitResult:
    """
    擬合單次 LZ 曲線，回傳 f_Δ（Hz）與 SPAM 參數 A、B

    資料沒有轉折（振幅過小或 Jacobian 奇異）時標記為未收斂
    """
    nu = np.asarray(nu, dtype=float)
    p_t = np.asarray(p_t, dtype=float)
    keep = np.isfinite(p_t)
    nu, p_t = nu[keep], p_t[keep]
    if nu.size < 5:
        raise FitError(f"fit_lz 至少需要 5 個點（目前 {nu.size}）")
    if np.any(nu <= 0):
        raise ModelError("能階速度必須為正")

    names = ('f_delta', 'amplitude', 'offset')
    span = float(np.max(p_t) - np.min(p_t))
    if span < 1e-9:
        logger.warning("⚠️ LZ 資料沒有轉折，無法擬合 f_Δ")
        return FitResult(names=names, values=np.array([math.nan, 0.0, float(np.mean(p_t))]), ci_half_widths=None,
                         residual_norm=math.inf, converged=False, iterations=0, flags=['no_curvature'])

    # 以速度中位數縮放 f_Δ，使擬合變數接近 1
    nu_ref = float(np.median(nu))
    f_scale = math.sqrt(nu_ref) / (2.0 * math.pi)
    midpoint = np.min(p_t) + 0.5 * span
    order = np.argsort(nu)
    nu_half = float(np.interp(midpoint, p_t[order][::-1], nu[order][::-1])) if p_t[order][0] > p_t[order][-1] else nu_ref
    f_guess = math.sqrt(nu_half * math.log(2.0)) / (2.0 * math.pi) / f_scale

    def model(p):
        return p[1] * (1.0 - np.exp(-(p[0] ** 2) * nu_ref / nu)) + p[2]

    starts = _starts([f_guess, span, float(np.min(p_t))], [0.3 * f_guess, 0.1 * span, 0.05], 6, seed)
    fit = fit_model(model, p_t, starts, names, ci_method, seed)
    fit = _rescale(fit, names, np.array([f_scale, 1.0, 1.0]))
    fit.values[0] = abs(fit.values[0])
    if 'rank_deficient' in fit.flags:
        fit = replace(fit, converged=False, ci_half_widths=None, flags=fit.flags + ['no_curvature'])
    return fit


# ==================== 能隙模型 ====================

def gap_model(eps, fields, tc0: float, kappa: float, delta_g: float, prior: DeviceParams,
              which: str = 'S_T0') -> np.ndarray:
    """
    以 (tc0, κ = 1/ε₀, δg) 計算 |E_{S_H} − E_T|(ε)（GHz）

    Args:
        eps: 失諧（µeV）
        fields: 每點的外加磁場 B_0^z（mT）
        kappa: 1/ε₀（1/µeV），0 表示常數 t_c
        prior: 提供 ḡ、Δ₁₁、B_OS、ε 偏移
    """
    eps = np.asarray(eps, dtype=float) + prior.eps_offset
    net = np.asarray(fields, dtype=float) + prior.b_offset
    tc = tc0 * np.exp(-kappa * np.maximum(eps, 0.0))
    f_eps = to_frequency(eps)
    ez_mean = zeeman_frequency(prior.g_mean, net)
    ez_diff = zeeman_frequency(delta_g, net)
    matrices = hs.assemble_h5(f_eps, tc, ez_mean, ez_diff, prior.delta11 * 1e-3)
    angles = hs.mixing_angle(tc, eps)
    index = hs.crossing_triplet(prior, which)
    return hs.gaps_from_matrices(matrices, angles, index)


def fit_gap_model(eps, gaps, prior: DeviceParams, fields=None, which: str = 'S_T0',
                  ci_method: str = 'linear', seed: int = 0, n_starts: int = 6,
                  resolution: float = GAP_RESOLUTION) -> FitResult:
    """
    以五能階本徵能隙擬合 (tc0, ε₀, δg)

    另以常數 t_c 重新擬合，diagnostics['constant_tc_residual_ratio'] 為兩者殘差比；
    可辨識性半寬（見 identifiability）超過參數本身大小時標記為 <name>_unidentifiable

    Args:
        eps: 失諧（µeV）
        gaps: 量得的能隙（GHz）
        prior: 先驗參數（ḡ、Δ₁₁、B_OS 與起點）
        fields: 每點的 B_0^z（mT），預設全部為 prior.b0z
        resolution: 能隙量測解析度（GHz）
    """
    eps = np.asarray(eps, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    if eps.shape != gaps.shape:
        raise ModelError("eps 與 gaps 長度不符")
    fields = np.full_like(eps, prior.b0z) if fields is None else np.asarray(fields, dtype=float)
    if gaps.size < 4:
        raise FitError("fit_gap_model 至少需要 4 個點")

    # 擬合變數：tc0（GHz）、κ（1/meV）、δg × 10³
    scale = np.array([1.0, 1e-3, 1e-3])
    kappa0 = 0.0 if math.isinf(prior.tc_decay) else 1.0 / prior.tc_decay
    center = np.array([prior.tc0, kappa0 / scale[1], prior.delta_g / scale[2]])
    spread = np.maximum(np.abs(center) * 0.3, [0.1, 0.3, 0.05])

    def model(p):
        return gap_model(eps, fields, p[0], p[1] * scale[1], p[2] * scale[2], prior, which)

    fit = fit_model(model, gaps, _starts(center, spread, n_starts, seed), ('tc0', 'kappa', 'delta_g'), ci_method, seed)
    fit = _rescale(fit, ('tc0', 'kappa', 'delta_g'), scale)
    fit.values[0] = abs(fit.values[0])

    def constant_model(p):
        return gap_model(eps, fields, p[0], 0.0, p[1] * scale[2], prior, which)

    constant = fit_model(constant_model, gaps, _starts(center[[0, 2]], spread[[0, 2]], n_starts, seed),
                         ('tc0', 'delta_g'), 'linear', seed)
    ratio = constant.residual_norm / max(fit.residual_norm, 1e-15)
    fit.diagnostics['constant_tc_residual_ratio'] = float(ratio)

    # κ → ε₀ 的 delta method
    kappa = fit.values[1]
    fit.diagnostics['tc_decay'] = 1.0 / kappa if kappa > 0 else math.inf
    if fit.ci_half_widths is not None and kappa > 0:
        fit.diagnostics['tc_decay_ci95'] = float(fit.ci_half_widths[1] / kappa ** 2)

    if fit.jacobian is not None and np.all(np.isfinite(fit.values)):
        widths = identifiability(fit.jacobian, fit.residuals, fit.values, resolution)
        for name, value, half in zip(fit.names, fit.values, widths):
            if not np.isfinite(half) or half > abs(value):
                fit.flags.append(f"{name}_unidentifiable")
                logger.warning(f"⚠️ {name} 無法由資料辨識（{value:.4g} ± {half:.3g}）")
    elif 'rank_deficient' in fit.flags:
        fit.flags.append('unidentifiable')
    logger.info(f"✅ 能隙模型擬合：tc0 = {fit.values[0]:.4g} GHz，δg = {fit.values[2]:.4g}，常數 t_c 殘差比 {ratio:.3g}")
    return fit


# ==================== 衰減振盪 ====================

def decay_model(tau, amplitude, frequency, phase, rate, offset, exponent):
    """A·cos(2πfτ+φ)·exp(−(γτ)^p) + C"""
    tau = np.asarray(tau, dtype=float)
    return amplitude * np.cos(2.0 * math.pi * frequency * tau + phase) * np.exp(-np.abs(rate * tau) ** exponent) + offset


def pi_fidelity(frequency: float, decay_time: float, exponent: float) -> float:
    """F_π = (1 + 包絡在 π 時間 1/(2f) 的比值)/2"""
    if math.isinf(decay_time):
        return 1.0
    return 0.5 * (1.0 + math.exp(-(1.0 / (2.0 * frequency * decay_time)) ** exponent))


def fit_decay(tau, p_t, ci_method: str = 'linear', seed: int = 0) -> FitResult:
    """
    擬合衰減振盪，p ∈ {1, 2} 取殘差較小者

    Returns:
        FitResult（amplitude、frequency（GHz）、phase、rate = 1/T、offset）；
        diagnostics 含 decay_time、exponent、f_pi、pi_time。
        過阻尼（找不到頻率）時 flags 含 frequency_absent

    Raises:
        ModelError: 可見振盪（整段或 2T 內，取較短者）少於兩個週期
    """
    tau = np.asarray(tau, dtype=float)
    p_t = np.asarray(p_t, dtype=float)
    names = ('amplitude', 'frequency', 'phase', 'rate', 'offset')
    dt = float(np.mean(np.diff(tau)))
    peak = fft_peak(p_t, dt)
    if not peak.present:
        logger.warning("⚠️ 衰減軌跡找不到振盪頻率")
        return FitResult(names=names, values=np.full(5, math.nan), ci_half_widths=None, residual_norm=math.inf,
                         converged=False, iterations=0, flags=['frequency_absent'])

    span = tau[-1] - tau[0]
    amplitude0 = 0.5 * float(np.max(p_t) - np.min(p_t))
    offset0 = float(np.mean(p_t))
    best = None
    for exponent in (1.0, 2.0):
        # 速率以 γ = u² 表示以保持非負
        def model(p, exponent=exponent):
            return decay_model(tau, p[0], p[1], p[2], p[3] ** 2, p[4], exponent)

        starts = [np.array([amplitude0, peak.frequency, phase, math.sqrt(rate / span), offset0])
                  for phase in (0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi) for rate in (0.3, 1.5)]
        fit = fit_model(model, p_t, starts, ('amplitude', 'frequency', 'phase', 'u', 'offset'), ci_method, seed)
        if fit.converged and (best is None or fit.residual_norm < best[0].residual_norm):
            best = (fit, exponent)
    if best is None:
        raise FitError("衰減擬合在兩種包絡下皆未收斂")

    fit, exponent = best
    u = fit.values[3]
    values = fit.values.copy()
    values[3] = u ** 2
    if values[0] < 0:
        values[0] = -values[0]
        values[2] += math.pi
    values[2] = math.remainder(values[2], 2.0 * math.pi)
    half = None
    if fit.ci_half_widths is not None:
        half = fit.ci_half_widths.copy()
        half[3] = 2.0 * abs(u) * half[3]

    rate = values[3]
    flags = list(fit.flags)
    decay_time = 1.0 / rate if rate > 0 else math.inf
    if rate * span < 1e-3:
        flags.append('no_decay')
        decay_time = math.inf
    frequency = abs(values[1])
    visible = frequency * min(span, 2.0 * decay_time)
    if visible < MIN_OSCILLATIONS:
        raise ModelError(f"可見振盪只有 {visible:.2g} 個週期，至少需要 {MIN_OSCILLATIONS:g} 個")
    diagnostics = dict(fit.diagnostics)
    diagnostics.update({
        'decay_time': decay_time,
        'exponent': exponent,
        'pi_time': 1.0 / (2.0 * frequency),
        'f_pi': pi_fidelity(frequency, decay_time, exponent),
        'f_pi_convention': 'envelope_at_pi_time',
    })
    return FitResult(names=names, values=values, ci_half_widths=half, residual_norm=fit.residual_norm,
                     converged=fit.converged, iterations=fit.iterations, residuals=fit.residuals,
                     covariance=fit.covariance, flags=flags, diagnostics=diagnostics)


# ==================== Stueckelberg 相位 ====================

def stokes_phase(f_delta_hz: float, nu: float) -> float:
    """
    Stokes 相位 π/4 + δ(ln δ − 1) + arg Γ(1 − iδ)，δ = 2π·f_Δ²/ν

    δ → 0（突變極限）時為 π/4，δ → ∞（絕熱極限）時為 0
    """
    delta = 2.0 * math.pi * f_delta_hz ** 2 / nu
    if delta == 0:
        return math.pi / 4
    return float(math.pi / 4 + delta * (math.log(delta) - 1.0) + np.imag(loggamma(1.0 - 1j * delta)))


def stueckelberg_phase(params: DeviceParams, schedule: PulseSchedule, which: str = 'S_T-',
                       samples: int = 2001) -> float:
    """
    ∫ 2π·|E_{S_H} − E_T|(ε(t)) dt，只累積交叉點之後（(1,1) 側）的時間

    dwell 以矩形精確計算，ramp 以梯形法；沒有交叉時累積整段
    """
    locus = hs.funnel_locus(params) if which == 'S_T-' else None
    phase = 0.0
    for seg in schedule.segments:
        if seg.kind == 'ramp' and seg.eps_start != seg.eps_end:
            t = np.linspace(0.0, seg.duration, samples)
            eps = seg.eps_start + (seg.eps_end - seg.eps_start) * t / seg.duration
            gap = hs.state_gaps(params, eps, which)
            if locus is not None:
                gap = np.where(eps > locus, gap, 0.0)
            phase += 2.0 * math.pi * float(trapezoid(gap, t))
        elif locus is None or seg.eps_start > locus:
            phase += 2.0 * math.pi * hs.state_gap(params, seg.eps_start, which) * seg.duration
    return phase


def predict_fringe_taus(params: DeviceParams, schedule_at: Callable[[float], PulseSchedule], eps: float,
                        velocity: float, count: int = 5, which: str = 'S_T-') -> np.ndarray:
    """
    預測 LZS 條紋（P_T 極大）的停留時間

    雙次通過的 P_T ∝ sin²(φ/2 + φ_S)，極大值出現在 φ(τ) + 2φ_S ≡ π (mod 2π)

    Args:
        schedule_at: τ → 脈衝序列（例如 lambda tau: lzs_schedule(params, eps, tau, velocity)）
        eps: 停留點（µeV）
        velocity: 能階速度（Hz/s）
    """
    locus = hs.funnel_locus(params)
    if locus is None:
        raise ModelError("淨磁場為零，沒有 LZS 交叉可預測條紋")
    gap = hs.state_gap(params, eps, which)
    f_delta = abs(hs.delta_theta(params, locus)) * 1e6
    base = stueckelberg_phase(params, schedule_at(0.0), which) + 2.0 * stokes_phase(f_delta, velocity)
    period = 1.0 / gap
    first = ((math.pi - base) / (2.0 * math.pi)) % 1.0 * period
    return first + period * np.arange(count)


def fit_fringe_phase(tau, p_t, gap_ghz: float, seed: int = 0) -> FitResult:
    """
    以已知能隙擬合條紋的加成相位常數：P_T = m + a·sin²((2π·gap·τ + φ₀)/2)
    """
    tau = np.asarray(tau, dtype=float)
    p_t = np.asarray(p_t, dtype=float)

    def model(p):
        return p[0] + p[1] * np.sin(0.5 * (2.0 * math.pi * gap_ghz * tau + p[2])) ** 2

    span = float(np.max(p_t) - np.min(p_t))
    starts = [np.array([float(np.min(p_t)), span, phase]) for phase in np.linspace(0.0, 2.0 * math.pi, 6, endpoint=False)]
    fit = fit_model(model, p_t, starts, ('mean', 'amplitude', 'phase'), 'linear', seed)
    if fit.values[1] < 0:
        fit.values[0] += fit.values[1]
        fit.values[1] = -fit.values[1]
        fit.values[2] += math.pi
    fit.values[2] = math.remainder(fit.values[2], 2.0 * math.pi)
    return fit
