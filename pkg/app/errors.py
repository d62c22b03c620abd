# errors.py
# 例外類別定義（CLI 依類別對應到 exit code）


class QdsimError(Exception):
    """所有模擬器錯誤的基底類別"""


class ModelError(QdsimError, ValueError):
    """模型／參數不變量違反、非 Hermitian 輸入"""


class ConfigParseError(ModelError):
    """設定檔解析錯誤（帶行列位置）"""

    def __init__(self, message: str, line: int = None, column: int = None):
        self.line = line
        self.column = column
        location = ''
        if line is not None:
            location = f"（第 {line} 行" + (f"，第 {column} 欄）" if column is not None else "）")
        super().__init__(f"{message}{location}")


class ScheduleError(ModelError):
    """脈衝序列不合法（帶 segment 索引）"""

    def __init__(self, message: str, segment_index: int = None):
        self.segment_index = segment_index
        if segment_index is not None:
            message = f"segment {segment_index}: {message}"
        super().__init__(message)


class ReadoutError(ModelError):
    """讀出統計輸入不合法"""


class NumericError(QdsimError, RuntimeError):
    """數值計算失敗"""


class StepBudgetError(NumericError):
    """時間格點數超過預算"""


class IntegrationError(NumericError):
    """積分過程中範數漂移"""


class FitError(NumericError):
    """擬合無法進行"""
