# config.py
import logging
import os
from typing import Optional

# --- Numerical tolerances and hard caps ---
# Bessel series is only trusted on [0, BESSEL_SERIES_MAX_Z].
BESSEL_SERIES_MAX_Z = 20.0
BESSEL_MAX_TERMS = 200
EXPONENTIAL_MAX_Z = 200.0  # lambda_c_exponential switches to scipy jv above BESSEL_SERIES_MAX_Z
ZERO_XTOL = 1e-12        # bisection tolerance for Bessel zeros
LAMBDA_XTOL = 1e-10      # bisection tolerance for every lambda_c root-finder
ASYMPTOTIC_ZERO_COEFF = 1.85575
LAMBDA_C_DELTA_COEFF = 2.34

NCP_ENUM_CAP = 8         # C_8 = 1430 pairings
NCP_INTEGRATION_CAP = 6
NCP_DETERMINISTIC_MAX = 2
CATALAN_OVERFLOW_N = 35  # C_35 no longer fits a signed 64-bit integer
SERIES_GRID_POINTS = 201
MC_DEFAULT_SAMPLES = 20000
MC_BLOCK_SIZE = 2000

STATIONARY_MAX_NODES = 10_000
TWO_TIME_MAX_NODES = 3_000
# tilted values below this lose precision in subnormal range
UNDERFLOW_FLOOR = 1e-280
SEED_ORDER = 1           # Taylor seed H(h) = 1 + k(0,0) h^2 / 2

LAPLACE_MARGIN = 0.05
NEAR_SINGULAR_STOP = 0.01
DERIVATIVE_STEP = 1e-4
RESIDUAL_TOL = 1e-8

FIT_MIN_POINTS = 50
JACKKNIFE_BLOCKS = 4

PSD_JITTER = 1e-10

# Command-line defaults
DEFAULTS = {
    "T": 20.0,
    "h": 1e-2,
    "N": 100,
    "S": 100,
    "n_max": 5,
    "gap": 20.0,
}

ARTIFACT_VERSION = "1.0"
APP_TITLE = "kraichnan-lab"

THREADS_ENV = "KRAICHNAN_THREADS"
LOG_LEVEL_ENV = "KRAICHNAN_LOG_LEVEL"
OUTPUT_DIR_ENV = "KRAICHNAN_OUTPUT_DIR"


def _parse_positive_int(value: Optional[str]) -> Optional[int]:
    if value is None:
        return None
    try:
        parsed = int(value.strip())
    except (TypeError, ValueError):
        return None
    return parsed if parsed > 0 else None


def thread_count(override: Optional[int] = None) -> int:
    """Worker count for the Monte Carlo pools, preferring an explicit override, then the environment."""
    if override is not None and override > 0:
        return override
    return _parse_positive_int(os.getenv(THREADS_ENV)) or 1


def log_level(verbose: bool = False) -> int:
    if verbose:
        return logging.DEBUG
    name = (os.getenv(LOG_LEVEL_ENV) or "INFO").strip().upper()
    level = logging.getLevelName(name)
    return level if isinstance(level, int) else logging.INFO


def output_dir() -> Optional[str]:
    value = os.getenv(OUTPUT_DIR_ENV)
    return value.strip() if value and value.strip() else None
