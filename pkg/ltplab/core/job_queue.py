import threading
import time
import uuid
from queue import Queue
from typing import Any, Callable

job_queue = Queue()
job_results = {}
_results_lock = threading.Lock()


def create_job(task: Callable[..., Any], data: dict, label: str | None = None) -> str:
    job_id = str(uuid.uuid4())
    with _results_lock:
        job_results[job_id] = {
            "status": "pending",
            "label": label,
            "created_at": time.time()
        }
    job_queue.put((job_id, task, data))
    return job_id


def get_job_result(job_id: str) -> dict:
    with _results_lock:
        return dict(job_results.get(job_id, {"status": "not_found"}))


def update_job(job_id: str, **fields) -> None:
    with _results_lock:
        job_results.setdefault(job_id, {}).update(fields)


def cleanup_jobs(ttl=3600):
    now = time.time()
    with _results_lock:
        to_delete = [
            job_id for job_id, job in job_results.items()
            if job.get("status") in ("completed", "failed")
            and now - job.get("created_at", now) > ttl
        ]
        for job_id in to_delete:
            del job_results[job_id]
