# experiment_service.py
# 五種標準實驗流程的格點模擬（spin funnel、LZ、LZS、交換振盪、ESR）與能隙曲線

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Tuple

import numpy as np

from app import current_config
from app.errors import ModelError, StepBudgetError
from app.models import (
    DeviceParams, Segment, PulseSchedule, StateVector, EvolveOptions, PTMap, Curve, Axis,
)
from app.services import hamiltonian_service as hs
from app.services import dynamics_service as ds
from app.utils.units import GHZ_PER_NS_TO_HZ_PER_S

logger = logging.getLogger(__name__)


# ==================== 共用工具 ====================

def default_options() -> EvolveOptions:
    """依目前設定建立演化選項"""
    settings = current_config()
    return EvolveOptions(max_phase_per_step=settings.MAX_PHASE, step_budget=settings.STEP_BUDGET)


def map_cells(func: Callable, items: Iterable, threads: int = None) -> List:
    """
    對每個格點呼叫 func，結果順序與輸入相同（與執行緒排程無關）
    """
    items = list(items)
    threads = threads or current_config().THREADS
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(func, items))


def blockade_probability(params: DeviceParams, state: StateVector, eps_readout: float) -> float:
    """
    量測點的阻塞機率 P_T = 1 − |⟨S-like|ψ⟩|²

    S-like 為讀出 ε 處與 (0,2)S 重疊最大的本徵態，其餘布居皆視為 triplet
    """
    singlet = ds.ground_02s(params, eps_readout).amplitudes
    return float(min(max(1.0 - state.overlap(singlet), 0.0), 1.0))


def _run(schedule: PulseSchedule, params: DeviceParams, opts: EvolveOptions) -> float:
    result = ds.evolve(schedule, params, opts)
    return blockade_probability(params, result.state, schedule.eps_end)


def _metadata(params: DeviceParams, **extra) -> dict:
    metadata = {'params': params.to_dict(), 'n_shots': 0}
    metadata.update(extra)
    return metadata


def _ensure_grid(name: str, grid) -> np.ndarray:
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ModelError(f"{name} 格點不可為空")
    return grid


# ==================== 脈衝序列樣板 ====================

def crossing_geometry(params: DeviceParams) -> Tuple[float, float, float]:
    """
    S/T− 交叉的位置與局部幾何

    Returns:
        (交叉 ε*（µeV）, f_Δ = |Δ(θ*)|（GHz）, 非絕熱能隙斜率 dgap/dε（GHz/µeV）)

    Raises:
        ModelError: 淨磁場為零，沒有交叉
    """
    locus = hs.funnel_locus(params)
    if locus is None:
        raise ModelError("淨磁場為零，S_H 與極化三重態沒有交叉")
    step = 1e-3 * max(1.0, abs(locus))
    slope = (hs.diabatic_gap(params, locus + step, 'S_T-') - hs.diabatic_gap(params, locus - step, 'S_T-')) / (2.0 * step)
    return locus, abs(hs.delta_theta(params, locus)) * 1e-3, slope


def charge_ramp(params: DeviceParams, eps_start: float, eps_end: float, duration: float) -> Segment:
    """
    快速 ramp，但不短於對 t_c 絕熱所需的時間

    對 Δ 仍為非絕熱：Δ 比 t_c 小好幾個數量級
    """
    safe = ds.charge_adiabatic_duration(params, eps_start, eps_end)
    return Segment('ramp', eps_start, eps_end, max(duration, safe))


def funnel_schedule(params: DeviceParams, eps: float, dwell: float) -> PulseSchedule:
    """I → ε ramp、停留 dwell、ε → M ramp"""
    protocol = params.protocol
    segments = [charge_ramp(params, protocol.eps_init, eps, protocol.funnel_ramp)]
    if dwell > 0:
        segments.append(Segment('dwell', eps, eps, dwell))
    segments.append(charge_ramp(params, eps, protocol.eps_readout, protocol.funnel_ramp))
    return PulseSchedule(segments=tuple(segments))


def lz_schedule(params: DeviceParams, velocity: float, window: float = None) -> PulseSchedule:
    """
    單次 LZ 通過：快速到 ε_a，以能階速度 velocity 線性掃過 ±window·f_Δ 的能隙範圍，再快速返回

    Args:
        velocity: 能階速度（Hz/s）
        window: 以 f_Δ 為單位的掃描半寬（預設 protocol.lz_window）
    """
    protocol = params.protocol
    window = protocol.lz_window if window is None else window
    locus, f_delta, slope = crossing_geometry(params)
    if f_delta == 0.0:
        raise ModelError("Δ(θ*) 為零，無法定義 LZ 掃描範圍")

    half_width = window * f_delta / abs(slope)
    eps_a, eps_b = max(locus - half_width, protocol.eps_init), locus + half_width
    rate = velocity / GHZ_PER_NS_TO_HZ_PER_S
    slow = abs(slope) * (eps_b - eps_a) / rate

    segments = []
    if eps_a > protocol.eps_init:
        segments.append(charge_ramp(params, protocol.eps_init, eps_a, protocol.plunge))
    segments.append(Segment('ramp', eps_a, eps_b, slow))
    segments.append(lz_return_ramp(params, eps_b))
    return PulseSchedule(segments=tuple(segments))


def lz_return_ramp(params: DeviceParams, eps_b: float) -> Segment:
    """掃描終點回到量測點的 ramp：對 Δ 非絕熱、對 t_c 絕熱"""
    protocol = params.protocol
    return charge_ramp(params, eps_b, protocol.eps_readout, protocol.lz_return)


def return_diabaticity(params: DeviceParams, seg: Segment) -> float:
    """返回 ramp 通過 S/T− 交叉時保持非絕熱的 LZ 機率"""
    _, f_delta, _ = crossing_geometry(params)
    return float(ds.landau_zener_probability(f_delta * 1e9, ds.level_velocity(params, seg, 'S_T-')))


def lzs_schedule(params: DeviceParams, eps: float, tau: float, velocity: float = None,
                 window: float = None) -> PulseSchedule:
    """
    雙次通過：快速到 ε_a，以 velocity 掃到 ε，停留 τ，同速掃回 ε_a，再快速返回

    velocity 預設為單次通過機率 ½ 的能階速度
    """
    protocol = params.protocol
    window = protocol.lz_window if window is None else window
    locus, f_delta, slope = crossing_geometry(params)
    if velocity is None:
        velocity = ds.lz_velocity_for_probability(f_delta * 1e9, 0.5)
    eps_rate = velocity / GHZ_PER_NS_TO_HZ_PER_S / abs(slope)
    eps_a = max(locus - window * f_delta / abs(slope), protocol.eps_init)
    if eps <= eps_a:
        raise ModelError(f"停留點 ε = {eps} µeV 必須大於掃描起點 {eps_a:.4g} µeV")

    sweep = (eps - eps_a) / eps_rate
    segments = []
    if eps_a > protocol.eps_init:
        segments.append(charge_ramp(params, protocol.eps_init, eps_a, protocol.plunge))
    segments.append(Segment('ramp', eps_a, eps, sweep))
    if tau > 0:
        segments.append(Segment('dwell', eps, eps, tau))
    segments.append(Segment('ramp', eps, eps_a, sweep))
    if eps_a != protocol.eps_readout:
        segments.append(charge_ramp(params, eps_a, protocol.eps_readout, protocol.plunge))
    return PulseSchedule(segments=tuple(segments))


def _prep_segments(params: DeviceParams, eps_target: float) -> Tuple[Segment, ...]:
    protocol = params.protocol
    return ds.shaped_ramp(params, protocol.eps_init, eps_target, protocol.prep_ramp,
                          protocol.crossing_ramp, protocol.crossing_window)


def _mirror(segments: Tuple[Segment, ...]) -> Tuple[Segment, ...]:
    return tuple(seg.reversed() for seg in reversed(segments))


def exchange_schedule(params: DeviceParams, eps: float, tau: float) -> PulseSchedule:
    """
    絕熱準備到 ε_prep，plunge 到 ε 停留 τ，plunge 回 ε_prep，再以鏡像 ramp 映射讀出
    """
    protocol = params.protocol
    prep = _prep_segments(params, protocol.eps_prep)
    middle = [Segment('ramp', protocol.eps_prep, eps, protocol.plunge)]
    if tau > 0:
        middle.append(Segment('dwell', eps, eps, tau))
    middle.append(Segment('ramp', eps, protocol.eps_prep, protocol.plunge))
    return PulseSchedule(segments=prep + tuple(middle) + _mirror(prep))


def esr_schedule(params: DeviceParams, eps: float, pulse: Segment) -> PulseSchedule:
    """絕熱準備到 ε，施加 ESR 脈衝，再以鏡像 ramp 映射讀出"""
    prep = _prep_segments(params, eps)
    drive = Segment('drive', eps, eps, pulse.duration, drive_freq=pulse.drive_freq,
                    drive_amp=pulse.drive_amp, drive_phase=pulse.drive_phase)
    return PulseSchedule(segments=prep + (drive,) + _mirror(prep))


def default_esr_pulse(params: DeviceParams, freq: float = 4.2) -> Segment:
    protocol = params.protocol
    return Segment('drive', 0.0, 0.0, protocol.esr_duration, drive_freq=freq, drive_amp=protocol.esr_amplitude)


# ==================== 實驗 ====================

def spin_funnel(params: DeviceParams, eps_grid, b_grid, dwell: float, opts: EvolveOptions = None) -> PTMap:
    """
    Spin funnel：對每個 (ε, B) 準備 (0,2)S、ramp 進入、停留、ramp 返回並判定阻塞

    Returns:
        PTMap（axis1 = ε，axis2 = B）
    """
    eps_grid = _ensure_grid('eps', eps_grid)
    b_grid = _ensure_grid('b', b_grid)
    opts = opts or default_options()
    started = time.time()
    logger.info(f"🔄 spin funnel：{eps_grid.size}×{b_grid.size} 格點，dwell = {dwell} ns")

    def cell(item):
        eps, b = item
        cell_params = params.with_updates(b0z=float(b))
        return _run(funnel_schedule(cell_params, float(eps), dwell), cell_params, opts)

    values = map_cells(cell, [(e, b) for e in eps_grid for b in b_grid])
    logger.info(f"✅ spin funnel 完成（{time.time() - started:.1f} 秒）")
    return PTMap(axis1=Axis('eps', 'µeV', eps_grid), axis2=Axis('b0z', 'mT', b_grid),
                 values=np.reshape(values, (eps_grid.size, b_grid.size)),
                 metadata=_metadata(params, dwell=dwell))


def funnel_ridge(ptmap: PTMap) -> np.ndarray:
    """每個 B 欄位上 P_T 最大的 ε（µeV）"""
    return ptmap.axis1.grid[np.argmax(ptmap.values, axis=0)]


def lz_single_passage(params: DeviceParams, velocity_grid, b0z: float,
                      opts: EvolveOptions = None, window: float = None) -> Curve:
    """
    單次 LZ 通過：P_T(ν) ≈ 1 − exp(−4π²f_Δ²/ν)

    超過步數預算的速度以 NaN 表示，並記錄在 metadata['skipped']
    """
    velocity_grid = _ensure_grid('velocity', velocity_grid)
    if np.any(velocity_grid <= 0):
        raise ModelError("能階速度必須為正")
    opts = opts or default_options()
    cell_params = params.with_updates(b0z=b0z)
    locus, f_delta, _ = crossing_geometry(cell_params)
    logger.info(f"🔄 LZ 單次通過：{velocity_grid.size} 個速度，ε* = {locus:.4g} µeV，f_Δ = {f_delta * 1e3:.4g} MHz")
    return_seg = lz_schedule(cell_params, float(velocity_grid[0]), window).segments[-1]
    return_diabatic = return_diabaticity(cell_params, return_seg)
    if return_diabatic < 0.99:
        logger.warning(f"⚠️ 返回 ramp（{return_seg.duration:.3g} ns）通過交叉時只有 {return_diabatic:.4f} 保持非絕熱")

    def cell(nu):
        try:
            return _run(lz_schedule(cell_params, float(nu), window), cell_params, opts)
        except StepBudgetError as e:
            logger.warning(f"⚠️ ν = {nu:.3e} Hz/s 略過：{e}")
            return math.nan

    values = np.array(map_cells(cell, velocity_grid))
    skipped = [float(nu) for nu, v in zip(velocity_grid, values) if math.isnan(v)]
    return Curve(axis=Axis('nu', 'Hz/s', velocity_grid), values=values, name='P_T',
                 metadata=_metadata(cell_params, f_delta_hz=f_delta * 1e9, crossing_eps=locus, skipped=skipped,
                                    return_diabatic_probability=return_diabatic))


def lzs_map(params: DeviceParams, eps_grid, tau_grid, velocity: float = None,
            opts: EvolveOptions = None, window: float = None) -> PTMap:
    """
    LZS 干涉：雙次通過並在 ε 停留 τ，條紋頻率為 |E_{S_H} − E_{T−}|(ε)/h

    Returns:
        PTMap（axis1 = ε，axis2 = τ）
    """
    eps_grid = _ensure_grid('eps', eps_grid)
    tau_grid = _ensure_grid('tau', tau_grid)
    opts = opts or default_options()
    _, f_delta, _ = crossing_geometry(params)
    if velocity is None:
        velocity = ds.lz_velocity_for_probability(f_delta * 1e9, 0.5)
    logger.info(f"🔄 LZS：{eps_grid.size}×{tau_grid.size} 格點，ν = {velocity:.3e} Hz/s")

    def cell(item):
        eps, tau = item
        return _run(lzs_schedule(params, float(eps), float(tau), velocity, window), params, opts)

    values = map_cells(cell, [(e, t) for e in eps_grid for t in tau_grid])
    return PTMap(axis1=Axis('eps', 'µeV', eps_grid), axis2=Axis('tau', 'ns', tau_grid),
                 values=np.reshape(values, (eps_grid.size, tau_grid.size)),
                 metadata=_metadata(params, velocity=velocity))


def exchange_map(params: DeviceParams, eps_grid, tau_grid, b0z: float = 200.0,
                 opts: EvolveOptions = None) -> PTMap:
    """
    交換振盪：準備 ↑↓/↓↑ 態、plunge 到 ε 停留 τ 後映射讀出；
    每個 ε 的振盪頻率為 |E_{S_H} − E_{T0}|(ε)/h

    Returns:
        PTMap（axis1 = ε，axis2 = τ）
    """
    eps_grid = _ensure_grid('eps', eps_grid)
    tau_grid = _ensure_grid('tau', tau_grid)
    opts = opts or default_options()
    cell_params = params.with_updates(b0z=b0z)
    ez = hs.zeeman_mean(cell_params)
    j_max = float(np.max(hs.exchange_j(cell_params, eps_grid)))
    if j_max > 0.2 * abs(ez):
        logger.warning(f"⚠️ J 最大 {j_max:.4g} GHz，未遠小於 Ē_Z = {ez:.4g} GHz")
    logger.info(f"🔄 交換振盪：{eps_grid.size}×{tau_grid.size} 格點，B = {b0z} mT")

    def cell(item):
        eps, tau = item
        return _run(exchange_schedule(cell_params, float(eps), float(tau)), cell_params, opts)

    values = map_cells(cell, [(e, t) for e in eps_grid for t in tau_grid])
    return PTMap(axis1=Axis('eps', 'µeV', eps_grid), axis2=Axis('tau', 'ns', tau_grid),
                 values=np.reshape(values, (eps_grid.size, tau_grid.size)),
                 metadata=_metadata(cell_params))


def esr_map(params: DeviceParams, eps_grid, freq_grid, pulse: Segment = None,
            opts: EvolveOptions = None) -> PTMap:
    """
    ESR 頻譜：在 ε 準備基態，施加頻率 f 的驅動，再映射讀出

    Returns:
        PTMap（axis1 = ε，axis2 = f）
    """
    eps_grid = _ensure_grid('eps', eps_grid)
    freq_grid = _ensure_grid('freq', freq_grid)
    pulse = pulse or default_esr_pulse(params)
    if pulse.kind != 'drive':
        raise ModelError("esr_map 的 pulse 必須是 drive segment")
    opts = opts or default_options()
    logger.info(f"🔄 ESR：{eps_grid.size}×{freq_grid.size} 格點，脈衝 {pulse.duration} ns，Ω = {pulse.drive_amp} MHz")

    def cell(item):
        eps, freq = item
        drive = Segment('drive', float(eps), float(eps), pulse.duration, drive_freq=float(freq),
                        drive_amp=pulse.drive_amp, drive_phase=pulse.drive_phase)
        return _run(esr_schedule(params, float(eps), drive), params, opts)

    values = map_cells(cell, [(e, f) for e in eps_grid for f in freq_grid])
    return PTMap(axis1=Axis('eps', 'µeV', eps_grid), axis2=Axis('freq', 'GHz', freq_grid),
                 values=np.reshape(values, (eps_grid.size, freq_grid.size)),
                 metadata=_metadata(params, pulse=pulse.to_dict()))


def esr_resonances(params: DeviceParams, eps: float) -> np.ndarray:
    """ε 處自準備基態出發、改變 S_z 的兩個躍遷頻率（GHz，遞增）"""
    es = hs.eigensystem(hs.build_h5(params, eps))
    _, target = ds.ground_antiparallel(params, eps)
    start = int(np.argmax([abs(np.vdot(es.vectors[:, k], target.amplitudes)) for k in range(5)]))
    polarized = [int(np.argmax(np.abs(es.vectors[index, :]))) for index in (hs.TP, hs.TM)]
    return np.sort(np.abs(es.values[polarized] - es.values[start]))


def gap_curve(params: DeviceParams, eps_grid, which: str = 'S_T0') -> Curve:
    """精確本徵能隙 |E_{S_H} − E_T|(ε)（GHz），作為擬合與萃取的理論線"""
    eps_grid = _ensure_grid('eps', eps_grid)
    values = hs.state_gaps(params, eps_grid, which)
    return Curve(axis=Axis('eps', 'µeV', eps_grid), values=values, name=f"gap_{which}", units='GHz',
                 metadata=_metadata(params, which=which))


def transfer_error(params: DeviceParams, eps_far: float = None, opts: EvolveOptions = None) -> float:
    """無停留的 I → ε_far → I 往返後的背景阻塞機率（轉移與映射誤差）"""
    protocol = params.protocol
    eps_far = protocol.eps_prep if eps_far is None else eps_far
    prep = _prep_segments(params, eps_far)
    return _run(PulseSchedule(segments=prep + _mirror(prep)), params, opts or default_options())
