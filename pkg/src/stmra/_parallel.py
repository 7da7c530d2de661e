import os


def worker_count() -> int:
    """Worker count from ``STMRA_THREADS`` (default: logical cores)."""
    raw = os.environ.get("STMRA_THREADS", "").strip()
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1
