import hashlib
import math
import os
from pathlib import Path
from typing import Optional, Union

THREADS_ENV = "SASV_FUSE_THREADS"


def format_seconds(s: float) -> str:
    """Formats seconds to 00:00:00 format."""
    hours, remainder = divmod(int(s), 3600)
    mins, secs = divmod(remainder, 60)
    return f"{hours:02}:{mins:02}:{secs:02}"


def format_percent(value: Optional[float]) -> str:
    """Render an error rate as a percentage with two decimals, '-' if absent."""
    if value is None or not math.isfinite(value):
        return "-"
    return f"{100.0 * value:.2f}"


def resolve_threads(requested: Optional[int] = None) -> int:
    """
    Number of worker threads to use.

    Parameters
    ----------
    requested : Optional[int]
        Value from ``--threads``; falls back to ``SASV_FUSE_THREADS`` and then
        to the CPU count.

    Returns
    -------
    int
        A positive worker count.
    """
    if requested is None:
        env = os.environ.get(THREADS_ENV, "").strip()
        if env:
            try:
                requested = int(env)
            except ValueError:
                requested = None
    if requested is None:
        requested = os.cpu_count() or 1
    return max(1, int(requested))


def sha256_file(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def finite_or_none(value: float) -> Optional[float]:
    # JSON has no infinities
    return float(value) if math.isfinite(value) else None
