# app/__init__.py
# 應用程式工廠（選擇設定、初始化日誌）

import logging
import os
import sys

from config import config

__all__ = ['create_app', 'current_config']

_active_config = None


def create_app(config_name=None):
    """
    應用程式工廠函數

    Args:
        config_name: development / production / testing（預設讀取 QDSIM_ENV）

    Returns:
        生效的設定類別
    """
    global _active_config
    if config_name is None:
        config_name = os.environ.get('QDSIM_ENV', 'development')
    if config_name not in config:
        raise ValueError(f"未知的設定名稱：{config_name}")

    settings = config[config_name]

    # 日誌統一輸出到 stderr，stdout 保留給執行摘要
    root = logging.getLogger('app')
    root.handlers.clear()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(settings.LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(getattr(logging, settings.LOG_LEVEL, logging.INFO))

    _active_config = settings
    return settings


def current_config():
    """目前生效的設定；尚未呼叫 create_app 時依環境變數建立"""
    if _active_config is None:
        return config.get(os.environ.get('QDSIM_ENV', 'default'), config['default'])
    return _active_config
