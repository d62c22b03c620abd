# celery_app.py
# Celery 應用程式入口點

import os

from celery import Celery

from config import config

# 從設定讀取 Celery 配置
settings = config[os.environ.get('QDSIM_ENV', 'default')]

# 建立 Celery 應用
celery_app = Celery(
    "qdsim_tasks",
    broker=settings.CELERY_BROKER_URL,
    backend=settings.CELERY_RESULT_BACKEND,
    include=['app.tasks']  # 直接指定任務模組
)

# Celery 配置
celery_app.conf.update(
    task_serializer="json",
    accept_content=["json"],
    result_serializer="json",
    timezone="Asia/Taipei",
    enable_utc=True,
    task_track_started=True,
    task_time_limit=6 * 3600,  # 大格點掃描可能需要數小時
    task_soft_time_limit=6 * 3600 - 60,
    worker_prefetch_multiplier=1,
    task_acks_late=True,
    task_reject_on_worker_lost=True,
    task_always_eager=settings.CELERY_EAGER,
    task_eager_propagates=True,
)


class QdsimTask(celery_app.Task):
    """自訂 Celery Task 類別，執行前確保設定與日誌已初始化"""
    _settings = None

    @property
    def settings(self):
        if self._settings is None:
            from app import create_app
            self._settings = create_app()
        return self._settings

    def __call__(self, *args, **kwargs):
        self.settings
        return super().__call__(*args, **kwargs)


# 設定預設 Task 類別
celery_app.Task = QdsimTask


if __name__ == "__main__":
    celery_app.start()
