"""Thread caps and deterministic mode for the BLAS backend."""
from __future__ import annotations

import os

from threadpoolctl import threadpool_limits

_limiter = None


def configure(deterministic: bool = True, threads: int | None = None) -> int:
    """Pin BLAS threading. Deterministic mode uses one thread; otherwise
    ``threads`` or the LFSAFA_THREADS environment variable caps it.

    Returns the thread count in effect (0 means library default).
    """
    global _limiter
    if deterministic:
        n = 1
    else:
        env = os.environ.get("LFSAFA_THREADS")
        n = threads if threads is not None else (int(env) if env else 0)
    _limiter = threadpool_limits(limits=n if n > 0 else None, user_api="blas")
    return n
