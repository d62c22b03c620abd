# models.py
# 領域模型定義（參數、Hamiltonian、脈衝序列、量測結果、擬合結果）

import math
from dataclasses import dataclass, field, fields, replace, asdict
from datetime import datetime
from typing import Optional, Tuple, Dict, Any, List

import numpy as np

from app.errors import ModelError, ScheduleError


# 五能階基底與有效四能階基底（順序即矩陣索引）
BASIS_5 = ('T+', 'T0', 'T-', '(1,1)S', '(0,2)S')
BASIS_4 = ('T+', 'T0', 'T-', 'S_H')

SEGMENT_KINDS = ('ramp', 'dwell', 'drive')
FRAMES = ('lab', 'rotating')
OUTCOMES = ('singlet', 'triplet')
READOUT_MODES = ('standard', 'latched')


# ==================== 裝置參數 ====================

@dataclass(frozen=True)
class SensorParams:
    """SET 感測器的唯象參數（電流單位 pA，只有 d/σ 有物理意義）"""
    standard_mu_singlet: float = 0.0
    standard_mu_triplet: float = 2.07
    latched_mu_singlet: float = 0.0
    latched_mu_triplet: float = 4.65
    sigma_current: float = 1.0
    latch_success: float = 1.0
    prep_error: float = 0.0

    def __post_init__(self):
        if not self.sigma_current > 0:
            raise ModelError(f"sigma_current 必須大於 0（目前 {self.sigma_current}）")
        for name in ('latch_success', 'prep_error'):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ModelError(f"{name} 必須介於 0 與 1（目前 {value}）")

    def means(self, mode: str) -> Tuple[float, float]:
        """回傳 (singlet 平均, triplet 平均)"""
        if mode == 'standard':
            return self.standard_mu_singlet, self.standard_mu_triplet
        if mode == 'latched':
            return self.latched_mu_singlet, self.latched_mu_triplet
        raise ModelError(f"未知的讀出模式：{mode}")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class ProtocolParams:
    """實驗流程預設值（ε 以 µeV、時間以 ns 表示）"""
    eps_init: float = -100.0          # 初始化點 I（深 (0,2)）
    eps_readout: float = -100.0       # 量測點 M
    eps_prep: float = 600.0           # 交換實驗的準備點（深 (1,1)）
    prep_ramp: float = 100.0          # 絕熱準備斜坡總長
    crossing_ramp: float = 2.0        # 通過 S/T- 交叉的快速段
    crossing_window: float = 5.0      # 快速段在 ε 上的半寬（µeV）
    plunge: float = 2.0               # 對 J 非絕熱、對 t_c 絕熱的 plunge
    funnel_ramp: float = 2.0
    lz_window: float = 200.0          # LZ 斜坡半寬（以 f_Δ 為單位的能隙）
    lz_return: float = 2.0            # LZ 返回斜坡（對 Δ 非絕熱）
    esr_duration: float = 25000.0     # 25 µs ESR 脈衝
    esr_amplitude: float = 0.02       # Rabi 頻率（MHz）

    def __post_init__(self):
        for name in ('prep_ramp', 'crossing_ramp', 'plunge', 'funnel_ramp', 'lz_return', 'esr_duration'):
            if not getattr(self, name) > 0:
                raise ModelError(f"protocol.{name} 必須大於 0")
        if not self.crossing_window >= 0:
            raise ModelError("protocol.crossing_window 不可為負")
        if not self.lz_window > 0:
            raise ModelError("protocol.lz_window 必須大於 0")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class DeviceParams:
    """
    雙量子點模型參數

    單位：tc0 GHz、tc_decay µeV（inf 表示常數 t_c）、delta11 MHz、
    b0z/b_offset mT、e_charging meV、sigma_eps µeV、sigma_delta kHz、eps_offset µeV
    """
    tc0: float = 1.864
    tc_decay: float = 600.0
    delta11: float = 0.2
    g1: float = 2.0
    g2: float = 2.00043
    b0z: float = 0.0
    b_offset: float = -1.04
    e_charging: float = 15.0
    valley_frac: float = 0.017
    sigma_eps: float = 0.0
    sigma_delta: float = 0.0
    eps_offset: float = 0.0
    sensor: SensorParams = field(default_factory=SensorParams)
    protocol: ProtocolParams = field(default_factory=ProtocolParams)

    def __post_init__(self):
        checks = [
            ('tc0', self.tc0 > 0, '必須大於 0'),
            ('tc_decay', self.tc_decay > 0, '必須大於 0（常數 t_c 請用 inf）'),
            ('g1', self.g1 > 0, '必須大於 0'),
            ('g2', self.g2 > 0, '必須大於 0'),
            ('sigma_eps', self.sigma_eps >= 0, '不可為負'),
            ('sigma_delta', self.sigma_delta >= 0, '不可為負'),
            ('e_charging', self.e_charging > 0, '必須大於 0'),
            ('valley_frac', self.valley_frac > 0, '必須大於 0'),
        ]
        for name, ok, reason in checks:
            if not ok:
                raise ModelError(f"{name} {reason}（目前 {getattr(self, name)}）")
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, float) and math.isnan(value):
                raise ModelError(f"{f.name} 不可為 NaN")

    @property
    def g_mean(self) -> float:
        return 0.5 * (self.g1 + self.g2)

    @property
    def delta_g(self) -> float:
        return self.g2 - self.g1

    @property
    def net_field(self) -> float:
        """B_0^z + B_OS（mT）"""
        return self.b0z + self.b_offset

    def with_updates(self, **changes) -> 'DeviceParams':
        return replace(self, **changes)

    def to_dict(self):
        result = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ('sensor', 'protocol')}
        result['sensor'] = self.sensor.to_dict()
        result['protocol'] = self.protocol.to_dict()
        return result

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'DeviceParams':
        data = dict(data)
        sensor = SensorParams(**data.pop('sensor', {}))
        protocol = ProtocolParams(**data.pop('protocol', {}))
        return cls(sensor=sensor, protocol=protocol, **data)


# ==================== Hamiltonian ====================

@dataclass(frozen=True, eq=False)
class Hamiltonian:
    """頻率單位（GHz）的複數矩陣與基底標籤"""
    matrix: np.ndarray
    basis: Tuple[str, ...]

    def __post_init__(self):
        if self.matrix.shape != (len(self.basis), len(self.basis)):
            raise ModelError(f"矩陣維度 {self.matrix.shape} 與基底 {self.basis} 不符")
        if tuple(self.basis) not in (BASIS_4, BASIS_5):
            raise ModelError(f"不支援的基底：{self.basis}")
        if not self.is_hermitian():
            raise ModelError("Hamiltonian 矩陣不是 Hermitian")

    @property
    def dim(self) -> int:
        return len(self.basis)

    def is_hermitian(self, atol: float = 1e-12) -> bool:
        """容差隨矩陣元素最大值縮放"""
        scale = max(1.0, float(np.max(np.abs(self.matrix))))
        return bool(np.allclose(self.matrix, self.matrix.conj().T, rtol=0.0, atol=atol * scale))

    def index(self, label: str) -> int:
        return self.basis.index(label)

    def to_dict(self):
        return {
            'basis': list(self.basis),
            'real': self.matrix.real.tolist(),
            'imag': self.matrix.imag.tolist(),
        }


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """遞增排列的本徵值（GHz）與對應的正交本徵向量（行向量）"""
    values: np.ndarray
    vectors: np.ndarray
    basis: Tuple[str, ...] = BASIS_5

    def vector(self, k: int) -> np.ndarray:
        return self.vectors[:, k]


# ==================== 脈衝序列 ====================

@dataclass(frozen=True)
class Segment:
    """
    脈衝序列的一段

    kind: ramp / dwell / drive；eps 以 µeV、duration 以 ns、
    drive_freq 以 GHz、drive_amp（Rabi 頻率）以 MHz、drive_phase 以 rad
    """
    kind: str
    eps_start: float
    eps_end: float
    duration: float
    drive_freq: float = 0.0
    drive_amp: float = 0.0
    drive_phase: float = 0.0

    def __post_init__(self):
        if self.kind not in SEGMENT_KINDS:
            raise ScheduleError(f"未知的 segment 種類：{self.kind}")
        if not self.duration > 0 or not math.isfinite(self.duration):
            raise ScheduleError(f"duration 必須為正（目前 {self.duration} ns）")
        if self.kind in ('dwell', 'drive') and self.eps_start != self.eps_end:
            raise ScheduleError(f"{self.kind} 的 eps_start 與 eps_end 必須相同")
        if self.kind == 'drive' and not self.drive_freq > 0:
            raise ScheduleError("drive 的 drive_freq 必須大於 0")

    def eps_at(self, t: float) -> float:
        """segment 內相對時間 t 的 ε（µeV）"""
        if self.kind != 'ramp':
            return self.eps_start
        return self.eps_start + (self.eps_end - self.eps_start) * (t / self.duration)

    def reversed(self) -> 'Segment':
        """
        時間反轉的 segment

        ramp 方向相反；drive 的 cos(2πft+φ) 反轉後等於 cos(2πft − 2πfT − φ)
        """
        if self.kind != 'drive':
            return replace(self, eps_start=self.eps_end, eps_end=self.eps_start)
        phase = math.remainder(-self.drive_phase - 2.0 * math.pi * self.drive_freq * self.duration, 2.0 * math.pi)
        return replace(self, drive_phase=phase)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class PulseSchedule:
    """依時間排序的 segment 列表；initial 為 'ground_02S' 或 5 個複數振幅"""
    segments: Tuple[Segment, ...]
    initial: Any = 'ground_02S'

    def __post_init__(self):
        segments = tuple(self.segments)
        object.__setattr__(self, 'segments', segments)
        if not segments:
            raise ScheduleError("脈衝序列至少需要一個 segment")
        for k in range(1, len(segments)):
            if abs(segments[k].eps_start - segments[k - 1].eps_end) > 1e-9:
                raise ScheduleError(
                    f"ε 不連續：前一段結束於 {segments[k - 1].eps_end} µeV，本段起始 {segments[k].eps_start} µeV",
                    segment_index=k,
                )
        if isinstance(self.initial, str):
            if self.initial != 'ground_02S':
                raise ScheduleError(f"未知的初始態：{self.initial}")
        else:
            amplitudes = tuple(complex(a) for a in self.initial)
            if len(amplitudes) != len(BASIS_5):
                raise ScheduleError("自訂初始態需要 5 個振幅")
            norm = math.sqrt(sum(abs(a) ** 2 for a in amplitudes))
            if not norm > 0:
                raise ScheduleError("自訂初始態不可為零向量")
            object.__setattr__(self, 'initial', tuple(a / norm for a in amplitudes))

    @property
    def duration(self) -> float:
        return sum(seg.duration for seg in self.segments)

    @property
    def eps_start(self) -> float:
        return self.segments[0].eps_start

    @property
    def eps_end(self) -> float:
        return self.segments[-1].eps_end

    def eps_at(self, t: float) -> float:
        elapsed = 0.0
        for seg in self.segments:
            if t <= elapsed + seg.duration:
                return seg.eps_at(t - elapsed)
            elapsed += seg.duration
        return self.eps_end

    def to_dict(self):
        initial = self.initial if isinstance(self.initial, str) else [[a.real, a.imag] for a in self.initial]
        return {'initial': initial, 'segments': [seg.to_dict() for seg in self.segments]}


@dataclass(frozen=True, eq=False)
class StateVector:
    """五能階基底上的歸一化振幅"""
    amplitudes: np.ndarray
    basis: Tuple[str, ...] = BASIS_5

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def populations(self) -> Dict[str, float]:
        probs = np.abs(self.amplitudes) ** 2
        return {label: float(p) for label, p in zip(self.basis, probs)}

    def overlap(self, vector: np.ndarray) -> float:
        """|⟨v|ψ⟩|²"""
        return float(abs(np.vdot(vector, self.amplitudes)) ** 2)

    def to_dict(self):
        return {
            'basis': list(self.basis),
            'real': self.amplitudes.real.tolist(),
            'imag': self.amplitudes.imag.tolist(),
        }


@dataclass(frozen=True)
class EvolveOptions:
    """時間演化選項"""
    max_phase_per_step: float = 0.05
    frame: str = 'rotating'
    record_trajectory: bool = False
    step_budget: int = 100_000_000
    drive_steps_per_cycle: int = 20

    def __post_init__(self):
        if not 0 < self.max_phase_per_step <= 0.2:
            raise ModelError(f"max_phase_per_step 必須在 (0, 0.2]（目前 {self.max_phase_per_step}）")
        if self.frame not in FRAMES:
            raise ModelError(f"未知的 frame：{self.frame}")
        if self.step_budget < 1:
            raise ModelError("step_budget 必須 ≥ 1")


@dataclass(frozen=True)
class SegmentGrid:
    """單一 segment 的時間格點"""
    index: int
    kind: str
    n_steps: int
    dt: float
    f_max: float
    time_dependent: bool

    @property
    def n_propagated(self) -> int:
        """實際要逐步傳播的步數（時間無關的段落以單一精確指數處理）"""
        return self.n_steps if self.time_dependent else 1


@dataclass(frozen=True)
class TimeGrid:
    segments: Tuple[SegmentGrid, ...]

    @property
    def total_steps(self) -> int:
        return sum(s.n_steps for s in self.segments)

    @property
    def propagated_steps(self) -> int:
        return sum(s.n_propagated for s in self.segments)


@dataclass(frozen=True, eq=False)
class PreparedState:
    """adiabatic_prepare 的結果與絕熱性診斷"""
    state: StateVector
    schedule: Optional['PulseSchedule']
    diagnostics: Dict[str, float] = field(default_factory=dict)
    warnings: Tuple[str, ...] = ()


@dataclass(frozen=True, eq=False)
class EvolveResult:
    """evolve 的輸出：終態與（選用的）軌跡"""
    state: StateVector
    grid: TimeGrid
    times: Optional[np.ndarray] = None
    trajectory: Optional[np.ndarray] = None


# ==================== 實驗輸出 ====================

@dataclass(frozen=True, eq=False)
class Axis:
    name: str
    units: str
    grid: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        object.__setattr__(self, 'grid', grid)
        if grid.ndim != 1 or grid.size == 0:
            raise ModelError(f"軸 {self.name} 必須為非空的一維格點")
        if grid.size > 1:
            steps = np.diff(grid)
            if not (np.all(steps > 0) or np.all(steps < 0)):
                raise ModelError(f"軸 {self.name} 必須嚴格單調")

    @property
    def header(self) -> str:
        return f"{self.name} [{self.units}]" if self.units else self.name


@dataclass(frozen=True, eq=False)
class PTMap:
    """二維 triplet（blockade）機率圖，values 形狀為 (len(axis1), len(axis2))"""
    axis1: Axis
    axis2: Axis
    values: np.ndarray
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.axis1.grid.size, self.axis2.grid.size):
            raise ModelError(f"PTMap 形狀 {values.shape} 與軸長度不符")
        finite = values[np.isfinite(values)]
        if finite.size and (finite.min() < -1e-9 or finite.max() > 1 + 1e-9):
            raise ModelError("P_T 必須介於 0 與 1")
        object.__setattr__(self, 'values', np.clip(values, 0.0, 1.0))

    def column(self, i: int) -> np.ndarray:
        """固定 axis1[i] 時沿 axis2 的切片"""
        return self.values[i, :]


@dataclass(frozen=True, eq=False)
class Curve:
    """一維量測曲線（NaN 表示被跳過的點）"""
    axis: Axis
    values: np.ndarray
    name: str = 'P_T'
    units: str = ''
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.axis.grid.shape:
            raise ModelError("Curve 數值長度與軸不符")
        object.__setattr__(self, 'values', values)


# ==================== 雜訊與讀出 ====================

@dataclass(frozen=True)
class NoiseSample:
    d_eps: float      # µeV
    d_delta: float    # kHz
    master_seed: int
    shot_index: int

    @property
    def lineage(self) -> str:
        return f"{self.master_seed}:{self.shot_index}"


@dataclass(frozen=True)
class ShotRecord:
    true_outcome: str
    current: float
    classified: str

    def __post_init__(self):
        if self.true_outcome not in OUTCOMES or self.classified not in OUTCOMES:
            raise ModelError("outcome 只能是 singlet 或 triplet")


# ==================== 擬合結果 ====================

@dataclass(eq=False)
class FitResult:
    """參數估計、95% 信賴區間與殘差診斷"""
    names: Tuple[str, ...]
    values: np.ndarray
    ci_half_widths: Optional[np.ndarray]
    residual_norm: float
    converged: bool
    iterations: int
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    covariance: Optional[np.ndarray] = None
    flags: List[str] = field(default_factory=list)
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    jacobian: Optional[np.ndarray] = None

    def value(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def ci(self, name: str) -> Optional[Tuple[float, float]]:
        if self.ci_half_widths is None:
            return None
        k = self.names.index(name)
        return float(self.values[k] - self.ci_half_widths[k]), float(self.values[k] + self.ci_half_widths[k])

    def to_dict(self):
        result = {
            'converged': self.converged,
            'iterations': self.iterations,
            'residual_norm': self.residual_norm,
            'flags': list(self.flags),
        }
        for k, name in enumerate(self.names):
            result[name] = float(self.values[k])
            if self.converged and self.ci_half_widths is not None:
                result[f"{name}_ci95"] = float(self.ci_half_widths[k])
        for key, value in self.diagnostics.items():
            if isinstance(value, (int, float, str, bool)):
                result[key] = value
        return result


# ==================== 執行紀錄 ====================

@dataclass
class RunManifest:
    """重現一次 CLI 執行所需的資訊"""
    command: str
    argv: List[str]
    config_hash: str
    master_seed: Optional[int]
    versions: Dict[str, str]
    wall_time: float = 0.0
    outputs: List[str] = field(default_factory=list)
    created_at: str = field(default_factory=lambda: datetime.utcnow().isoformat())

    def to_dict(self):
        return asdict(self)
