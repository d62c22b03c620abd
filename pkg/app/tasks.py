# app/tasks.py
# Celery 任務定義（把整次 CLI 執行交給 worker）

import logging
import time
from typing import List

from celery import group

from celery_app import celery_app

logger = logging.getLogger(__name__)


@celery_app.task(name="run_command", bind=True)
def run_command(self, argv: List[str]) -> int:
    """
    在 worker 上執行一次子命令

    Args:
        argv: 與命令列相同的參數（不含程式名稱）

    Returns:
        exit code
    """
    from app.cli import run

    start_time = time.time()
    logger.info(f"🔄 任務 {self.request.id}：{' '.join(argv)}")
    code = run(argv)
    elapsed = time.time() - start_time
    if code == 0:
        logger.info(f"✅ 任務 {self.request.id} 完成（{elapsed:.1f} 秒）")
    else:
        logger.error(f"❌ 任務 {self.request.id} 失敗，exit code {code}（{elapsed:.1f} 秒）")
    return code


@celery_app.task(name="dispatch_sweep")
def dispatch_sweep(commands: List[List[str]]) -> List[str]:
    """
    把多個子命令分派到 worker（例如分段的 ε 掃描）

    Returns:
        各子任務的 id
    """
    if not commands:
        logger.info("沒有待分派的子命令")
        return []
    result = group(run_command.s(list(argv)) for argv in commands).apply_async()
    ids = [child.id for child in result.children or []]
    logger.info(f"📤 已分派 {len(ids)} 個子命令")
    return ids
