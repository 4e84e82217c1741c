import logging
import threading
import time

from ltplab.core.job_queue import cleanup_jobs, job_queue, update_job

logger = logging.getLogger("ltplab.worker")

_threads: list[threading.Thread] = []
_lock = threading.Lock()
_cleanup_lock = threading.Lock()
last_cleanup = 0.0


def worker():
    while True:
        job_id, task, data = job_queue.get()

        update_job(job_id, status="processing", started_at=time.time())
        logger.info(f"Processing job {job_id}")

        try:
            result = task(**data)

            update_job(job_id, status="completed", result=result, finished_at=time.time())
            logger.info(f"Job completed {job_id}")

        except Exception as e:
            update_job(job_id, status="failed", error=str(e), error_type=type(e).__name__,
                       exception=e, finished_at=time.time())
            logger.error(f"Job failed {job_id} | error={str(e)}")

        finally:
            job_queue.task_done()
            _maybe_cleanup()


def _maybe_cleanup(interval: float = 10.0) -> bool:
    global last_cleanup

    with _cleanup_lock:
        now = time.time()
        if now - last_cleanup <= interval:
            return False
        last_cleanup = now
    cleanup_jobs()
    return True


def start_workers(count: int = 1) -> int:
    """Starts daemon workers until ``count`` are alive; returns the alive count."""
    with _lock:
        _threads[:] = [t for t in _threads if t.is_alive()]
        while len(_threads) < max(1, count):
            thread = threading.Thread(target=worker, name=f"ltplab-worker-{len(_threads)}", daemon=True)
            thread.start()
            _threads.append(thread)
        logger.info(f"Workers ready | count={len(_threads)}")
        return len(_threads)


def wait_for_jobs() -> None:
    job_queue.join()
