# noise_service.py
# 準靜態雜訊取樣與 shot 平均（每個 shot 內參數固定、shot 之間隨機）

import logging
import math
import time
from typing import Callable, Union

import numpy as np

from app.errors import ModelError
from app.models import DeviceParams, NoiseSample, PTMap, Curve
from app.services import hamiltonian_service as hs
from app.services.experiment_service import map_cells

logger = logging.getLogger(__name__)


# ==================== 亂數 ====================

def shot_rng(master_seed: int, shot_index: int) -> np.random.Generator:
    """
    每個 shot 專屬的計數器型亂數產生器（Philox）

    種子由 (master_seed, shot_index) 決定，與執行順序無關
    """
    if master_seed < 0 or shot_index < 0:
        raise ModelError("master_seed 與 shot_index 必須為非負整數")
    sequence = np.random.SeedSequence(int(master_seed), spawn_key=(int(shot_index),))
    return np.random.Generator(np.random.Philox(sequence))


def sample(params: DeviceParams, master_seed: int, shot_index: int) -> NoiseSample:
    """
    抽取一個 shot 的準靜態雜訊

    Returns:
        NoiseSample，d_eps ~ N(0, σ_ε)（µeV）、d_delta ~ N(0, σ_Δ)（kHz）
    """
    rng = shot_rng(master_seed, shot_index)
    draws = rng.standard_normal(2)
    return NoiseSample(d_eps=float(params.sigma_eps * draws[0]),
                       d_delta=float(params.sigma_delta * draws[1]),
                       master_seed=int(master_seed), shot_index=int(shot_index))


def perturbed(params: DeviceParams, noise: NoiseSample) -> DeviceParams:
    """套用雜訊：ε 偏移 d_eps，Δ₁₁ 偏移 d_delta（kHz → MHz）"""
    return params.with_updates(eps_offset=params.eps_offset + noise.d_eps,
                               delta11=params.delta11 + noise.d_delta * 1e-3)


# ==================== shot 平均 ====================

def shot_average(experiment: Callable[[DeviceParams], Union[PTMap, Curve]], params: DeviceParams,
                 n_shots: int, master_seed: int, draw_outcomes: bool = True,
                 threads: int = None) -> Union[PTMap, Curve]:
    """
    對每個 shot 擾動參數、執行實驗並抽取二元阻塞結果，最後平均

    Args:
        experiment: 接受 DeviceParams、回傳 PTMap 或 Curve 的實驗呼叫
        params: 名目參數
        n_shots: shot 數（≥ 1）
        master_seed: 主種子
        draw_outcomes: False 時直接平均機率（系綜平均，不做二項抽樣）

    Returns:
        與 experiment 相同型別的結果，metadata 附上 n_shots 與 master_seed
    """
    if n_shots < 1:
        raise ModelError(f"n_shots 必須 ≥ 1（目前 {n_shots}）")
    started = time.time()
    logger.info(f"🔄 shot 平均：{n_shots} 個 shot，seed = {master_seed}，σ_ε = {params.sigma_eps} µeV，σ_Δ = {params.sigma_delta} kHz")

    def one_shot(index):
        noise = sample(params, master_seed, index)
        result = experiment(perturbed(params, noise))
        values = np.nan_to_num(result.values, nan=0.0)
        if not draw_outcomes:
            return result, values
        # 抽樣用獨立的子序列，與雜訊取樣不重疊
        rng = shot_rng(master_seed, index)
        rng.standard_normal(2)
        return result, (rng.random(values.shape) < values).astype(float)

    outcomes = map_cells(one_shot, range(n_shots), threads)
    template = outcomes[0][0]
    total = np.zeros_like(outcomes[0][1])
    for _, values in outcomes:
        total += values
    averaged = total / n_shots

    metadata = dict(template.metadata)
    metadata.update({'n_shots': n_shots, 'master_seed': master_seed, 'draw_outcomes': draw_outcomes,
                     'params': params.to_dict()})
    logger.info(f"✅ shot 平均完成（{time.time() - started:.1f} 秒）")
    if isinstance(template, PTMap):
        return PTMap(axis1=template.axis1, axis2=template.axis2, values=averaged, metadata=metadata)
    return Curve(axis=template.axis, values=averaged, name=template.name, units=template.units, metadata=metadata)


# ==================== 靜態退相干解析式 ====================

def exchange_noise(params: DeviceParams, eps: float, step: float = 1e-3) -> float:
    """σ_J = |dJ/dε|·σ_ε（GHz）"""
    derivative = (hs.exchange_j(params, eps + step) - hs.exchange_j(params, eps - step)) / (2.0 * step)
    return abs(derivative) * params.sigma_eps


def static_dephasing_envelope(sigma_j: float, tau):
    """高斯平均 cos(2π(J+δJ)τ) 的包絡 exp(−2π²σ_J²τ²)"""
    tau = np.asarray(tau, dtype=float)
    return np.exp(-2.0 * math.pi ** 2 * sigma_j ** 2 * tau ** 2)


def oscillations_to_decay(j: float, sigma_j: float) -> float:
    """包絡降到 1/e 前的振盪次數 N = J/(√2·π·σ_J)"""
    if sigma_j == 0:
        return math.inf
    return j / (math.sqrt(2.0) * math.pi * sigma_j)
