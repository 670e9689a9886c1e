import os
import logging
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

CURVLAB_THREADS = int(os.getenv("CURVLAB_THREADS", "1"))
CURVLAB_LOG_LEVEL = os.getenv("CURVLAB_LOG_LEVEL", "INFO").upper()
CURVLAB_OUT_DIR = os.getenv("CURVLAB_OUT_DIR", "runs")


def get_threads() -> int:
    """Worker cap for sweeps; re-read so tests and callers can override the env at runtime."""
    raw = os.getenv("CURVLAB_THREADS", str(CURVLAB_THREADS))
    try:
        threads = int(raw)
    except ValueError:
        logging.getLogger(__name__).warning(f"⚠️ CURVLAB_THREADS={raw!r} is not an integer, using 1")
        return 1
    return max(1, threads)


def get_log_level(quiet: bool = False, verbose: bool = False) -> int:
    """Resolve the logging level from CLI flags, falling back to CURVLAB_LOG_LEVEL."""
    if quiet:
        return logging.WARNING
    if verbose:
        return logging.DEBUG
    return getattr(logging, CURVLAB_LOG_LEVEL, logging.INFO)


if __name__ == "__main__":
    print("✅ settings:", {"threads": get_threads(), "log_level": CURVLAB_LOG_LEVEL, "out_dir": CURVLAB_OUT_DIR})
