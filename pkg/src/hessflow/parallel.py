"""Thread pool sizing and chunking for embarrassingly parallel sweeps."""

from __future__ import annotations

import os


def worker_count(default_cap=32):
    """Number of worker threads: HESSFLOW_THREADS if set, else cpu count."""
    raw = os.environ.get("HESSFLOW_THREADS")
    if raw is not None:
        n = int(raw)
        if n < 1:
            raise ValueError("HESSFLOW_THREADS must be at least 1")
        return n
    return min(default_cap, os.cpu_count() or 1)


def chunked(seq, size):
    """Split a sequence into contiguous chunks of at most `size` items."""
    if size < 1:
        raise ValueError("chunk size must be at least 1")
    return [seq[i:i + size] for i in range(0, len(seq), size)]
