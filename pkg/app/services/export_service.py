# export_service.py
# 結果匯出服務（CSV、擬合報告、執行紀錄）

import hashlib
import json
import logging
import os
import platform
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd

from app.errors import ModelError
from app.models import PTMap, Curve, FitResult, RunManifest, EvolveResult

logger = logging.getLogger(__name__)

# 固定浮點格式，確保相同輸入產生逐位元相同的輸出
FLOAT_FORMAT = '%.12g'


# ==================== 輔助函數 ====================

def resolve_output(path: str, output_dir: str) -> str:
    """相對路徑放到 output_dir 之下，並建立上層目錄"""
    if not os.path.isabs(path):
        path = os.path.join(output_dir, path)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    return path


def _write_frame(frame: pd.DataFrame, path: str) -> str:
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    logger.info(f"✅ 已寫入 {path}（{len(frame)} 列）")
    return path


def config_hash(text: str) -> str:
    """設定檔內容的 SHA-256"""
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def package_versions() -> Dict[str, str]:
    """數值結果相關套件的版本"""
    import scipy

    return {
        'python': platform.python_version(),
        'numpy': np.__version__,
        'scipy': scipy.__version__,
        'pandas': pd.__version__,
    }


# ==================== 資料表 ====================

def ptmap_frame(ptmap: PTMap) -> pd.DataFrame:
    """
    PTMap → 長格式資料表

    每個格點一列，欄位為兩個軸（名稱含單位）與 P_T；axis1 為外層迴圈
    """
    first = np.repeat(ptmap.axis1.grid, ptmap.axis2.grid.size)
    second = np.tile(ptmap.axis2.grid, ptmap.axis1.grid.size)
    return pd.DataFrame({
        ptmap.axis1.header: first,
        ptmap.axis2.header: second,
        'P_T': ptmap.values.reshape(-1),
    })


def curve_frame(curve: Curve) -> pd.DataFrame:
    header = f"{curve.name} [{curve.units}]" if curve.units else curve.name
    return pd.DataFrame({curve.axis.header: curve.axis.grid, header: curve.values})


def histogram_frame(centers: Sequence[float], counts: Sequence[int]) -> pd.DataFrame:
    return pd.DataFrame({'bin_center [pA]': np.asarray(centers, dtype=float),
                         'count': np.asarray(counts, dtype=int)})


def populations_frame(result: EvolveResult, basis: Sequence[str]) -> pd.DataFrame:
    """最終態的布居；有軌跡時每個時間點一列"""
    if result.trajectory is None:
        return pd.DataFrame({'state': list(basis), 'population': np.abs(result.state.amplitudes) ** 2})
    frame = pd.DataFrame(np.abs(result.trajectory) ** 2, columns=list(basis))
    frame.insert(0, 't [ns]', result.times)
    return frame


# ==================== 寫檔 ====================

def write_ptmap(ptmap: PTMap, path: str) -> str:
    return _write_frame(ptmap_frame(ptmap), path)


def write_curve(curve: Curve, path: str) -> str:
    return _write_frame(curve_frame(curve), path)


def write_histogram(centers, counts, path: str) -> str:
    return _write_frame(histogram_frame(centers, counts), path)


def write_populations(result: EvolveResult, basis: Sequence[str], path: str) -> str:
    return _write_frame(populations_frame(result, basis), path)


def write_fit(fit: FitResult, path: str) -> List[str]:
    """
    擬合結果寫成 key,value 的 CSV，殘差另存 <stem>_residuals.csv

    Returns:
        寫入的檔案路徑
    """
    rows = [(key, value) for key, value in fit.to_dict().items() if key != 'flags']
    rows.append(('flags', ';'.join(fit.flags)))
    frame = pd.DataFrame(rows, columns=['key', 'value'])
    written = [_write_frame(frame, path)]
    if fit.residuals is not None and len(fit.residuals):
        stem, ext = os.path.splitext(path)
        residual_path = f"{stem}_residuals{ext or '.csv'}"
        written.append(_write_frame(pd.DataFrame({'index': np.arange(len(fit.residuals)),
                                                  'residual': fit.residuals}), residual_path))
    return written


def write_summary(values: Dict[str, object], path: str) -> str:
    """純量摘要（key,value）"""
    frame = pd.DataFrame([(key, value) for key, value in values.items()], columns=['key', 'value'])
    return _write_frame(frame, path)


def write_manifest(manifest: RunManifest, path: str) -> str:
    """執行紀錄寫成 JSON"""
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(manifest.to_dict(), f, ensure_ascii=False, indent=2)
    logger.info(f"✅ 已寫入執行紀錄 {path}")
    return path


def manifest_path(output: str) -> str:
    stem, _ = os.path.splitext(output)
    return f"{stem}.manifest.json"


# ==================== 讀檔 ====================

def read_columns(path: str, count: int) -> List[np.ndarray]:
    """
    讀取 CSV 的前 count 欄（擬合輸入）

    Raises:
        ModelError: 欄位數不足
    """
    frame = pd.read_csv(path)
    if frame.shape[1] < count:
        raise ModelError(f"{path} 至少需要 {count} 欄（目前 {frame.shape[1]}）")
    return [frame.iloc[:, k].to_numpy(dtype=float) for k in range(count)]

