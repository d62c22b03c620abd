# dynamics_service.py
# 脈衝序列編譯與時間演化（分段中點矩陣指數、RWA 驅動、絕熱準備）

import logging
import math
from functools import lru_cache
from typing import Callable, Optional, Tuple

import numpy as np

from app.errors import ModelError, StepBudgetError, IntegrationError
from app.models import (
    DeviceParams, Segment, PulseSchedule, StateVector, EvolveOptions, EvolveResult,
    SegmentGrid, TimeGrid, Hamiltonian, PreparedState, BASIS_5,
)
from app.services import hamiltonian_service as hs
from app.utils.units import to_frequency, GHZ_PER_NS_TO_HZ_PER_S

logger = logging.getLogger(__name__)

# 每個基底態的總自旋 z 分量
SZ_DIAG = np.array([1.0, 0.0, -1.0, 0.0, 0.0])

# 批次計算時每塊的步數上限
CHUNK_STEPS = 100_000

RAMP_SAMPLES = 65
VELOCITY_SAMPLES = 10_000
NORM_TOLERANCE = 1e-6

# 電荷 ramp 在 t_c 反交叉處容許的殘留 LZ 機率
CHARGE_LZ_TOLERANCE = 1e-4


# ==================== Landau-Zener 解析式 ====================

def landau_zener_probability(f_delta_hz, nu):
    """
    單次通過的非絕熱機率 P = exp(−4π²f_Δ²/ν)

    Args:
        f_delta_hz: 耦合 f_Δ（Hz，能隙最小值的一半）
        nu: 能階速度（Hz/s）
    """
    return np.exp(-4.0 * math.pi ** 2 * np.asarray(f_delta_hz, dtype=float) ** 2 / np.asarray(nu, dtype=float))


def lz_velocity_for_probability(f_delta_hz: float, probability: float) -> float:
    """landau_zener_probability 對 ν 的反函數"""
    if not 0.0 < probability < 1.0:
        raise ModelError(f"機率必須介於 0 與 1 之間（目前 {probability}）")
    return -4.0 * math.pi ** 2 * f_delta_hz ** 2 / math.log(probability)


def charge_adiabatic_duration(params: DeviceParams, eps_start: float, eps_end: float,
                              tolerance: float = CHARGE_LZ_TOLERANCE) -> float:
    """
    線性 ramp 對 t_c 反交叉保持絕熱（殘留 LZ 機率 ≤ tolerance）所需的最短時間（ns）

    (0,2)S–(1,1)S 的非絕熱能隙即 ε 本身，耦合取 ramp 範圍內最接近反交叉點的 t_c
    """
    if not 0.0 < tolerance < 1.0:
        raise ModelError(f"tolerance 必須介於 0 與 1 之間（目前 {tolerance}）")
    lo, hi = sorted((eps_start, eps_end))
    nearest = min(max(-params.eps_offset, lo), hi)
    tc = float(hs.tunnel_coupling(params, nearest))
    span = to_frequency(hi - lo)
    return span * math.log(1.0 / tolerance) / (4.0 * math.pi ** 2 * tc ** 2)


def level_velocity(params: DeviceParams, seg: Segment, which: str = 'S_T-',
                   gap: Optional[Callable] = None) -> float:
    """
    沿 ramp 的能階速度 ν（Hz/s）

    以 duration/10⁴ 的步長對非絕熱能隙做有限差分，取能隙過零處的斜率；
    ramp 沒有跨過交叉時，改用 |能隙| 最小處的斜率

    Args:
        params: 裝置參數
        seg: ramp segment
        which: 'S_T-' 或 'S_T0'
        gap: 自訂能隙函數 gap(eps_array) -> GHz（預設為 diabatic_gap）

    Raises:
        ModelError: seg 不是 ramp
    """
    if seg.kind != 'ramp':
        raise ModelError(f"level_velocity 需要 ramp，收到 {seg.kind}")

    dt = seg.duration / VELOCITY_SAMPLES
    t = np.arange(VELOCITY_SAMPLES + 1) * dt
    eps = seg.eps_start + (seg.eps_end - seg.eps_start) * t / seg.duration
    values = np.asarray(gap(eps) if gap is not None else hs.diabatic_gap(params, eps, which), dtype=float)

    crossings = np.nonzero(np.diff(np.signbit(values)))[0]
    if crossings.size:
        k = int(crossings[0])
        slope = (values[k + 1] - values[k]) / dt
    else:
        k = int(np.argmin(np.abs(values)))
        slope = np.gradient(values, dt)[k]
        logger.debug(f"ramp 未跨過交叉，改用最小能隙處（t = {t[k]:.4g} ns）的斜率")
    return float(abs(slope) * GHZ_PER_NS_TO_HZ_PER_S)


# ==================== 傳播子工具 ====================

def _step_unitaries(matrices: np.ndarray, dt: float) -> np.ndarray:
    """對每個 Hermitian 矩陣計算 exp(−i·2π·H·dt)"""
    values, vectors = np.linalg.eigh(matrices)
    phases = np.exp(-2j * math.pi * values * dt)
    return (vectors * phases[..., None, :]) @ vectors.conj().swapaxes(-1, -2)


def _ordered_product(unitaries: np.ndarray) -> np.ndarray:
    """U_{n−1}···U_1·U_0（較晚的在左邊），以成對樹狀相乘"""
    while unitaries.shape[0] > 1:
        if unitaries.shape[0] % 2:
            identity = np.eye(unitaries.shape[-1], dtype=complex)[None]
            unitaries = np.concatenate([unitaries, identity])
        unitaries = unitaries[1::2] @ unitaries[0::2]
    return unitaries[0]


def _piecewise_propagator(h_at: Callable[[np.ndarray], np.ndarray], duration: float,
                          n_steps: int, dim: int) -> np.ndarray:
    """以中點 Hamiltonian 逐步傳播整段時間，回傳總傳播子"""
    dt = duration / n_steps
    total = np.eye(dim, dtype=complex)
    for start in range(0, n_steps, CHUNK_STEPS):
        stop = min(start + CHUNK_STEPS, n_steps)
        t_mid = (np.arange(start, stop) + 0.5) * dt
        total = _ordered_product(_step_unitaries(h_at(t_mid), dt)) @ total
    return total


def _max_frequency(matrices: np.ndarray) -> float:
    """扣除整體相位（tr H / dim）後的最大本徵頻率"""
    values = np.linalg.eigvalsh(matrices)
    return float(np.max(np.abs(values - values.mean(axis=-1, keepdims=True))))


def steps_for(f_max: float, duration: float, max_phase: float) -> int:
    """滿足 2π·f_max·dt ≤ max_phase 的最少步數"""
    if f_max * duration <= 0.0:
        return 1
    return max(1, math.ceil(duration * 2.0 * math.pi * f_max / max_phase - 1e-9))


# ==================== ESR 驅動 ====================

def drive_operator(params: DeviceParams, amp_mhz: float) -> np.ndarray:
    """
    實驗室座標的橫向驅動矩陣 B†(Ω₁σx₁ + Ω₂σx₂)B（GHz）

    Ω_i = Ω·g_i/ḡ；乘上 cos(2πft+φ) 後，RWA 保留一半
    """
    sigma_x = np.array([[0.0, 1.0], [1.0, 0.0]])
    identity = np.eye(2)
    omega1 = amp_mhz * 1e-3 * params.g1 / params.g_mean
    omega2 = amp_mhz * 1e-3 * params.g2 / params.g_mean
    product_op = omega1 * np.kron(sigma_x, identity) + omega2 * np.kron(identity, sigma_x)
    transform = hs.product_basis_transform()
    return transform.conj().T @ product_op @ transform


def rotating_frame_matrix(params: DeviceParams, seg: Segment) -> np.ndarray:
    """
    RWA 後的時間無關 Hamiltonian H0 − f·S_z + W

    H0 中改變 S_z 的 Δ 項在旋轉座標以 ±f 振盪，RWA 下捨去
    """
    h0 = hs.h5_matrices(params, seg.eps_start)[0]
    dm = SZ_DIAG[:, None] - SZ_DIAG[None, :]
    static = np.where(dm == 0, h0, 0.0) - seg.drive_freq * np.diag(SZ_DIAG)
    coupling = 0.5 * drive_operator(params, seg.drive_amp) * np.exp(-1j * seg.drive_phase * dm)
    return static + coupling


def esr_hamiltonian(params: DeviceParams, seg: Segment, t: float, frame: str = 'rotating') -> Hamiltonian:
    """
    驅動 segment 在時間 t（相對 segment 起點，ns）的 Hamiltonian

    Args:
        frame: 'lab' 時為 H0 + cos(2πft+φ)·V；'rotating' 時為 RWA 矩陣（與 t 無關）

    Raises:
        ModelError: seg 不是 drive 或 frame 不合法
    """
    if seg.kind != 'drive':
        raise ModelError(f"esr_hamiltonian 需要 drive segment，收到 {seg.kind}")
    if frame == 'rotating':
        return Hamiltonian(matrix=rotating_frame_matrix(params, seg), basis=BASIS_5)
    if frame == 'lab':
        h0 = hs.h5_matrices(params, seg.eps_start)[0]
        carrier = math.cos(2.0 * math.pi * seg.drive_freq * t + seg.drive_phase)
        return Hamiltonian(matrix=h0 + carrier * drive_operator(params, seg.drive_amp), basis=BASIS_5)
    raise ModelError(f"未知的 frame：{frame}")


def _lab_drive_matrices(params: DeviceParams, seg: Segment) -> Callable[[np.ndarray], np.ndarray]:
    h0 = hs.h5_matrices(params, seg.eps_start)[0]
    drive = drive_operator(params, seg.drive_amp)

    def h_at(t):
        carrier = np.cos(2.0 * math.pi * seg.drive_freq * t + seg.drive_phase)
        return h0[None] + carrier[:, None, None] * drive[None]
    return h_at


def _ramp_matrices(params: DeviceParams, seg: Segment) -> Callable[[np.ndarray], np.ndarray]:
    def h_at(t):
        return hs.h5_matrices(params, seg.eps_start + (seg.eps_end - seg.eps_start) * t / seg.duration)
    return h_at


# ==================== 編譯 ====================

@lru_cache(maxsize=1024)
def segment_grid(params: DeviceParams, seg: Segment, opts: EvolveOptions) -> SegmentGrid:
    """單一 segment 的步長選擇（index 由 compile 填入）"""
    if seg.kind == 'ramp':
        eps = np.linspace(seg.eps_start, seg.eps_end, RAMP_SAMPLES)
        f_max = _max_frequency(hs.h5_matrices(params, eps))
        n_steps = steps_for(f_max, seg.duration, opts.max_phase_per_step)
        time_dependent = seg.eps_start != seg.eps_end
    elif seg.kind == 'dwell':
        f_max = _max_frequency(hs.h5_matrices(params, seg.eps_start))
        n_steps = steps_for(f_max, seg.duration, opts.max_phase_per_step)
        time_dependent = False
    elif opts.frame == 'rotating':
        f_max = _max_frequency(rotating_frame_matrix(params, seg)[None])
        n_steps = steps_for(f_max, seg.duration, opts.max_phase_per_step)
        time_dependent = False
    else:
        h0 = hs.h5_matrices(params, seg.eps_start)[0]
        drive = drive_operator(params, seg.drive_amp)
        f_max = max(_max_frequency((h0 + sign * drive)[None]) for sign in (-1.0, 1.0))
        per_cycle = math.ceil(opts.drive_steps_per_cycle * seg.drive_freq * seg.duration)
        n_steps = max(steps_for(f_max, seg.duration, opts.max_phase_per_step), per_cycle)
        time_dependent = True

    return SegmentGrid(index=0, kind=seg.kind, n_steps=n_steps, dt=seg.duration / n_steps,
                       f_max=f_max, time_dependent=time_dependent)


def compile(schedule: PulseSchedule, params: DeviceParams, opts: EvolveOptions = None) -> TimeGrid:
    """
    為每個 segment 選擇步長：f_max × dt ≤ max_phase/2π，
    lab frame 的驅動另外保證每週期至少 drive_steps_per_cycle 步

    Raises:
        StepBudgetError: 需要傳播的總步數超過 step_budget
    """
    opts = opts or EvolveOptions()
    grids = []
    for k, seg in enumerate(schedule.segments):
        grid = segment_grid(params, seg, opts)
        grids.append(SegmentGrid(index=k, kind=grid.kind, n_steps=grid.n_steps, dt=grid.dt,
                                 f_max=grid.f_max, time_dependent=grid.time_dependent))
        logger.debug(f"segment {k} ({seg.kind}): {grid.n_steps} 步，dt = {grid.dt:.3g} ns，f_max = {grid.f_max:.4g} GHz")

    time_grid = TimeGrid(segments=tuple(grids))
    if time_grid.propagated_steps > opts.step_budget:
        worst = max(grids, key=lambda g: g.n_propagated)
        raise StepBudgetError(
            f"需要傳播 {time_grid.propagated_steps} 步，超過預算 {opts.step_budget}；"
            f"最大者為 segment {worst.index}（{worst.kind}，{worst.n_propagated} 步，f_max = {worst.f_max:.4g} GHz）"
        )
    return time_grid


@lru_cache(maxsize=512)
def segment_propagator(params: DeviceParams, seg: Segment, opts: EvolveOptions) -> np.ndarray:
    """
    整段 segment 的傳播子（結果會快取，掃描格點時重複的 ramp 只算一次）

    drive 在 rotating frame 以單一精確指數處理，再轉回實驗室座標
    """
    grid = segment_grid(params, seg, opts)
    if seg.kind == 'ramp' and grid.time_dependent:
        unitary = _piecewise_propagator(_ramp_matrices(params, seg), seg.duration, grid.n_steps, 5)
    elif seg.kind == 'drive' and opts.frame == 'lab':
        unitary = _piecewise_propagator(_lab_drive_matrices(params, seg), seg.duration, grid.n_steps, 5)
    elif seg.kind == 'drive':
        unitary = _step_unitaries(rotating_frame_matrix(params, seg)[None], seg.duration)[0]
        unitary = np.diag(np.exp(-2j * math.pi * seg.drive_freq * seg.duration * SZ_DIAG)) @ unitary
    else:
        unitary = _step_unitaries(hs.h5_matrices(params, seg.eps_start), seg.duration)[0]
    unitary.setflags(write=False)
    return unitary


def _trace_segment(params: DeviceParams, seg: Segment, opts: EvolveOptions, psi: np.ndarray):
    """逐步傳播並記錄每一步後的狀態（相對 segment 起點的時間）"""
    grid = segment_grid(params, seg, opts)
    dt = grid.dt
    times = (np.arange(grid.n_steps) + 1) * dt
    states = np.empty((grid.n_steps, 5), dtype=complex)

    if seg.kind == 'drive' and opts.frame == 'rotating':
        step = _step_unitaries(rotating_frame_matrix(params, seg)[None], dt)[0]
        for k in range(grid.n_steps):
            psi = step @ psi
            states[k] = psi
        # 轉回實驗室座標
        frames = np.exp(-2j * math.pi * seg.drive_freq * np.outer(times, SZ_DIAG))
        return frames[-1] * psi, times, frames * states

    if grid.time_dependent:
        h_at = _lab_drive_matrices(params, seg) if seg.kind == 'drive' else _ramp_matrices(params, seg)
        for start in range(0, grid.n_steps, CHUNK_STEPS):
            stop = min(start + CHUNK_STEPS, grid.n_steps)
            unitaries = _step_unitaries(h_at((np.arange(start, stop) + 0.5) * dt), dt)
            for k, unitary in enumerate(unitaries):
                psi = unitary @ psi
                states[start + k] = psi
        return psi, times, states

    step = _step_unitaries(hs.h5_matrices(params, seg.eps_start), dt)[0]
    for k in range(grid.n_steps):
        psi = step @ psi
        states[k] = psi
    return psi, times, states


# ==================== 初始態 ====================

def ground_02s(params: DeviceParams, eps: float) -> StateVector:
    """ε 處與 (0,2)S 重疊最大的本徵態"""
    es = hs.eigensystem(hs.build_h5(params, eps))
    k = int(np.argmax(np.abs(es.vectors[hs.S02, :]) ** 2))
    return StateVector(amplitudes=es.vectors[:, k].copy())


def initial_state(schedule: PulseSchedule, params: DeviceParams) -> StateVector:
    if isinstance(schedule.initial, str):
        return ground_02s(params, schedule.eps_start)
    return StateVector(amplitudes=np.array(schedule.initial, dtype=complex))


def antiparallel_state(label: str) -> np.ndarray:
    """乘積態 ↑↓ 或 ↓↑ 在耦合基底的向量"""
    rows = {'↑↓': 1, '↓↑': 2}
    if label not in rows:
        raise ModelError(f"未知的反平行態：{label}")
    return hs.product_basis_transform()[rows[label]].conj()


def ground_antiparallel(params: DeviceParams, eps: float) -> Tuple[str, StateVector]:
    """
    在 ε 處，T0/(1,1)S 子空間中能量較低的本徵態最接近哪個乘積態

    在 H = +gµ_B·B·S 的慣例下，δE_Z > 0 時為 ↑↓

    Returns:
        (標籤, 對應的乘積態向量)
    """
    es = hs.eigensystem(hs.build_h5(params, eps))
    weights = np.abs(es.vectors[hs.T0, :]) ** 2 + np.abs(es.vectors[hs.S11, :]) ** 2
    pair = np.argsort(weights)[-2:]
    lower = int(pair[np.argmin(es.values[pair])])
    product = hs.product_basis_transform() @ es.vectors[:, lower]
    label = '↑↓' if abs(product[1]) >= abs(product[2]) else '↓↑'
    return label, StateVector(amplitudes=antiparallel_state(label))


def swap_time(params: DeviceParams, eps: float) -> float:
    """SWAP 閘時間 1/(2·|E_{S_H} − E_{T0}|)，單位 ns"""
    return 1.0 / (2.0 * hs.state_gap(params, eps, 'S_T0'))


# ==================== 時間演化 ====================

def evolve(schedule: PulseSchedule, params: DeviceParams, opts: EvolveOptions = None) -> EvolveResult:
    """
    分段傳播 ψ ← exp(−i·2π·H(t_mid)·δt)·ψ

    Args:
        schedule: 脈衝序列
        params: 裝置參數
        opts: 演化選項

    Returns:
        EvolveResult（record_trajectory 時附上時間與狀態軌跡）

    Raises:
        StepBudgetError: 步數超過預算
        IntegrationError: 範數漂移超過 1e-6
    """
    opts = opts or EvolveOptions()
    grid = compile(schedule, params, opts)
    hs.check_validity(params, [schedule.eps_start] + [seg.eps_end for seg in schedule.segments])
    psi = initial_state(schedule, params).amplitudes.astype(complex)

    all_times, all_states = [], []
    elapsed = 0.0
    for k, seg in enumerate(schedule.segments):
        if opts.record_trajectory:
            psi, times, states = _trace_segment(params, seg, opts, psi)
            all_times.append(times + elapsed)
            all_states.append(states)
        else:
            psi = segment_propagator(params, seg, opts) @ psi
        elapsed += seg.duration

        drift = abs(np.linalg.norm(psi) - 1.0)
        if drift > NORM_TOLERANCE:
            raise IntegrationError(f"segment {k}（{seg.kind}）之後範數漂移 {drift:.2e}")

    result = EvolveResult(state=StateVector(amplitudes=psi), grid=grid)
    if opts.record_trajectory:
        result = EvolveResult(state=result.state, grid=grid,
                              times=np.concatenate(all_times), trajectory=np.concatenate(all_states))
    return result


def reverse_schedule(schedule: PulseSchedule, final_state: StateVector) -> PulseSchedule:
    """
    時間反轉的脈衝序列，初始態為終態的複數共軛

    以 evolve 傳播後應回到原初始態的共軛
    """
    segments = tuple(seg.reversed() for seg in reversed(schedule.segments))
    return PulseSchedule(segments=segments, initial=tuple(np.conj(final_state.amplitudes)))


def landau_zener_sweep(f_delta_ghz: float, nu: float, window: float = 2000.0,
                       steps_per_scale: int = 50) -> float:
    """
    孤立二能階線性掃描的數值非絕熱機率

    H(t) = [[ν·t/2, f_Δ], [f_Δ, −ν·t/2]]，掃到能隙為 window·f_Δ 為止；
    步長取 LZ 時間尺度 max(1/√ν, f_Δ/ν) 的 1/steps_per_scale

    Args:
        f_delta_ghz: 耦合（GHz）
        nu: 能階速度（Hz/s）

    Returns:
        停留在原非絕熱態的機率
    """
    rate = nu / GHZ_PER_NS_TO_HZ_PER_S
    duration = 2.0 * window * f_delta_ghz / rate
    scale = max(1.0 / math.sqrt(rate), f_delta_ghz / rate)
    n_steps = max(1000, math.ceil(duration * steps_per_scale / scale))

    def h_at(t):
        sweep = 0.5 * rate * (t - 0.5 * duration)
        matrices = np.zeros((t.size, 2, 2), dtype=complex)
        matrices[:, 0, 0] = sweep
        matrices[:, 1, 1] = -sweep
        matrices[:, 0, 1] = matrices[:, 1, 0] = f_delta_ghz
        return matrices

    unitary = _piecewise_propagator(h_at, duration, n_steps, 2)
    return float(abs(unitary[0, 0]) ** 2)


# ==================== 絕熱準備 ====================

def shaped_ramp(params: DeviceParams, eps_start: float, eps_end: float, ramp: float,
                crossing_ramp: float, crossing_window: float) -> Tuple[Segment, ...]:
    """
    在 S/T− 交叉附近快速通過、其他區域緩慢的分段 ramp

    交叉點不在範圍內或 ramp 不比 crossing_ramp 長時，回傳單一線性 ramp
    """
    locus = hs.funnel_locus(params)
    lo, hi = sorted((eps_start, eps_end))
    if locus is None or not lo < locus < hi or ramp <= crossing_ramp:
        return (Segment('ramp', eps_start, eps_end, ramp),)

    direction = 1.0 if eps_end > eps_start else -1.0
    enter = min(max(locus - direction * crossing_window, lo), hi)
    leave = min(max(locus + direction * crossing_window, lo), hi)
    slow_before = abs(enter - eps_start)
    slow_after = abs(eps_end - leave)
    slow_total = slow_before + slow_after
    slow_time = ramp - crossing_ramp

    points = [(eps_start, enter, slow_time * slow_before / slow_total if slow_total else 0.0),
              (enter, leave, crossing_ramp),
              (leave, eps_end, slow_time * slow_after / slow_total if slow_total else 0.0)]
    segments = tuple(Segment('ramp', a, b, duration) for a, b, duration in points if duration > 0 and a != b)
    return segments or (Segment('ramp', eps_start, eps_end, ramp),)


def _adiabatic_follow(params: DeviceParams, eps_start: float, eps_end: float, samples: int = 4001) -> np.ndarray:
    """沿 ε 以最大重疊追蹤 (0,2)S 起始的本徵態（無限慢 ramp 的極限）"""
    eps = np.linspace(eps_start, eps_end, samples)
    _, vectors = np.linalg.eigh(hs.h5_matrices(params, eps))
    current = ground_02s(params, eps_start).amplitudes
    for k in range(samples):
        overlaps = np.abs(vectors[k].conj().T @ current)
        chosen = vectors[k][:, int(np.argmax(overlaps))]
        current = chosen * np.exp(-1j * np.angle(np.vdot(chosen, current)))
    return current


def _singlet_adiabaticity(params: DeviceParams, segments, samples: int = 201) -> float:
    """單態區塊的一階絕熱參數 max|⟨−|dH/dt|+⟩| / (2π·gap²)"""
    worst = 0.0
    for seg in segments:
        eps = np.linspace(seg.eps_start, seg.eps_end, samples)
        rate = (seg.eps_end - seg.eps_start) / seg.duration
        step = 1e-3

        def block(e):
            f_eps = to_frequency(e + params.eps_offset)
            tc = np.atleast_1d(hs.tunnel_coupling(params, e))
            matrices = np.zeros((e.size, 2, 2))
            matrices[:, 0, 0] = -0.5 * f_eps
            matrices[:, 1, 1] = 0.5 * f_eps
            matrices[:, 0, 1] = matrices[:, 1, 0] = tc
            return matrices

        values, vectors = np.linalg.eigh(block(eps))
        dh = (block(eps + step) - block(eps - step)) / (2.0 * step) * rate
        coupling = np.abs(np.einsum('ni,nij,nj->n', vectors[:, :, 0], dh, vectors[:, :, 1]))
        gap = values[:, 1] - values[:, 0]
        worst = max(worst, float(np.max(coupling / (2.0 * math.pi * gap ** 2))))
    return worst


def adiabatic_prepare(params: DeviceParams, eps_target: float, ramp: float,
                      eps_init: float = None, opts: EvolveOptions = None) -> PreparedState:
    """
    從初始化點 I 的 (0,2)S 基態 ramp 到 eps_target

    對 t_c 保持絕熱、在 S/T− 交叉附近對 Δ 非絕熱；ramp = 0 時為瞬變（狀態不變），
    ramp = inf 時回傳絕熱追蹤的本徵態

    Returns:
        PreparedState，含診斷：
        - singlet_adiabaticity：單態區塊絕熱參數（遠小於 1 為佳）
        - crossing_lz_probability：通過 S/T− 交叉仍保持非絕熱的機率（接近 1 為佳）
        - antiparallel_fidelity：與目標反平行乘積態的重疊
    """
    protocol = params.protocol
    eps_init = protocol.eps_init if eps_init is None else eps_init
    if ramp < 0:
        raise ModelError(f"ramp 不可為負（目前 {ramp} ns）")

    if ramp == 0:
        return PreparedState(state=ground_02s(params, eps_init), schedule=None)

    if math.isinf(ramp):
        state = StateVector(amplitudes=_adiabatic_follow(params, eps_init, eps_target))
        schedule = None
        segments = ()
    else:
        segments = shaped_ramp(params, eps_init, eps_target, ramp,
                               protocol.crossing_ramp, protocol.crossing_window)
        schedule = PulseSchedule(segments=segments)
        state = evolve(schedule, params, opts).state

    diagnostics = {}
    if segments:
        diagnostics['singlet_adiabaticity'] = _singlet_adiabaticity(params, segments)
        locus = hs.funnel_locus(params)
        crossing = []
        if locus is not None:
            crossing = [seg for seg in segments
                        if min(seg.eps_start, seg.eps_end) <= locus <= max(seg.eps_start, seg.eps_end)]
        if crossing and params.delta11 != 0:
            nu = level_velocity(params, crossing[0], 'S_T-')
            f_delta = abs(hs.delta_theta(params, locus)) * 1e6
            diagnostics['crossing_velocity'] = nu
            diagnostics['crossing_lz_probability'] = float(landau_zener_probability(f_delta, nu))
    label, target = ground_antiparallel(params, eps_target)
    diagnostics['antiparallel_fidelity'] = state.overlap(target.amplitudes)

    warnings = []
    adiabatic_ok = diagnostics.get('singlet_adiabaticity', 0.0) < 0.1
    diabatic_ok = diagnostics.get('crossing_lz_probability', 1.0) > 0.9
    if not adiabatic_ok and not diabatic_ok:
        message = (f"ramp = {ramp} ns 同時違反兩個條件：對 t_c 非絕熱"
                   f"（{diagnostics['singlet_adiabaticity']:.3g}），且在 S/T− 交叉不夠快"
                   f"（P_LZ = {diagnostics['crossing_lz_probability']:.3g}）")
        logger.warning(f"⚠️ {message}")
        warnings.append(message)

    return PreparedState(state=state, schedule=schedule, diagnostics=diagnostics, warnings=tuple(warnings))
