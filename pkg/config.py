# config.py
# 應用程式配置

import os

basedir = os.path.abspath(os.path.dirname(__file__))


def _env_bool(name: str, default: str = 'False') -> bool:
    return os.environ.get(name, default).lower() in ('1', 'true', 'yes')


class Config:
    """基礎配置"""
    # 執行緒數（格點／shot 平行化）
    THREADS = max(1, int(os.environ.get('QDSIM_THREADS', 1)))

    # 時間演化
    STEP_BUDGET = int(os.environ.get('QDSIM_STEP_BUDGET', 100_000_000))
    MAX_PHASE = float(os.environ.get('QDSIM_MAX_PHASE', 0.05))

    # 輸出
    OUTPUT_DIR = os.environ.get('QDSIM_OUTPUT_DIR', os.path.join(basedir, 'output'))

    # 日誌
    LOG_LEVEL = os.environ.get('QDSIM_LOG_LEVEL', 'INFO').upper()
    LOG_FORMAT = '%(asctime)s [%(levelname)s] %(name)s: %(message)s'

    # Celery
    CELERY_BROKER_URL = os.environ.get('CELERY_BROKER_URL', 'redis://localhost:6379/0')
    CELERY_RESULT_BACKEND = os.environ.get('CELERY_RESULT_BACKEND', 'redis://localhost:6379/0')
    CELERY_EAGER = _env_bool('QDSIM_CELERY_EAGER')

    # 實驗流程預設值（ε 以 µeV、時間以 ns；設定檔 [protocol] 可覆寫）
    PROTOCOL_DEFAULTS = {
        'eps_init': -100.0,
        'eps_readout': -100.0,
        'eps_prep': 600.0,
        'prep_ramp': 100.0,
        'crossing_ramp': 2.0,
        'crossing_window': 5.0,
        'plunge': 2.0,
        'funnel_ramp': 2.0,
        'lz_window': 200.0,
        'lz_return': 2.0,
        'esr_duration': 25000.0,
        'esr_amplitude': 0.02,
    }

    # 讀出統計的預設 shot 數與直方圖 bin 數
    READOUT_SHOTS = 10_000
    HISTOGRAM_BINS = 60


class DevelopmentConfig(Config):
    """開發環境配置"""
    DEBUG = True
    LOG_LEVEL = os.environ.get('QDSIM_LOG_LEVEL', 'DEBUG').upper()


class ProductionConfig(Config):
    """生產環境配置"""
    DEBUG = False


class TestingConfig(Config):
    """測試環境配置"""
    TESTING = True
    DEBUG = False
    THREADS = 1
    MAX_PHASE = 0.05
    LOG_LEVEL = 'WARNING'
    CELERY_EAGER = _env_bool('QDSIM_CELERY_EAGER', 'True')


config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': DevelopmentConfig
}
