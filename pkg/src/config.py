"""Centralized configuration: all tunable constants in one place.

Each setting reads from an env variable with a default.
Import from here instead of hardcoding values. Physical scenario
parameters live in the TOML scenario files, not here.
"""

from __future__ import annotations

import os


def _int(key: str, default: int) -> int:
    return int(os.environ.get(key, default))


def _float(key: str, default: float) -> float:
    return float(os.environ.get(key, default))


def _str(key: str, default: str) -> str:
    return os.environ.get(key, default)


# ── Process ──────────────────────────────────────────────────────────────────
LOG_LEVEL = _str("LOG_LEVEL", "INFO").upper()
OUTPUT_DIR = _str("OUTPUT_DIR", "runs")
THREADS = _int("THREADS", 1)

# ── Store I/O ────────────────────────────────────────────────────────────────
WRITE_MAX_RETRIES = _int("WRITE_MAX_RETRIES", 3)
WRITE_BACKOFF_BASE = _float("WRITE_BACKOFF_BASE", 0.5)

# ── Potential maps ───────────────────────────────────────────────────────────
WELL_PROMINENCE_FRACTION = _float("WELL_PROMINENCE_FRACTION", 1e-6)

# ── GPE solver ───────────────────────────────────────────────────────────────
GPE_GRID_POINTS = _int("GPE_GRID_POINTS", 2048)
GPE_GRID_SPACING_UM = _float("GPE_GRID_SPACING_UM", 0.025)
REFERENCE_FREQUENCY_HZ = _float("REFERENCE_FREQUENCY_HZ", 2100.0)
TOF_NONLINEAR_PHASE = _float("TOF_NONLINEAR_PHASE", 0.1)
TOF_FREE_SWITCH_PHASE = _float("TOF_FREE_SWITCH_PHASE", 0.01)
TOF_GRID_POINTS = _int("TOF_GRID_POINTS", 8192)
TOF_MAX_GRID_POINTS = _int("TOF_MAX_GRID_POINTS", 1 << 20)
GROUND_STATE_TOLERANCE = _float("GROUND_STATE_TOLERANCE", 1e-10)
GROUND_STATE_MAX_ITERATIONS = _int("GROUND_STATE_MAX_ITERATIONS", 200_000)
CFL_LIMIT = _float("CFL_LIMIT", 0.1)
ALIASING_EDGE_FRACTION = _float("ALIASING_EDGE_FRACTION", 1e-6)

# ── Two-mode model ───────────────────────────────────────────────────────────
TWO_MODE_MAX_POINTS = _int("TWO_MODE_MAX_POINTS", 2048)
PHASE_LOCK_THRESHOLD_DEG = _float("PHASE_LOCK_THRESHOLD_DEG", 5.0)

# ── Fringe fitting ───────────────────────────────────────────────────────────
FIT_MAX_ITERATIONS = _int("FIT_MAX_ITERATIONS", 200)
FIT_COST_TOLERANCE = _float("FIT_COST_TOLERANCE", 1e-12)
FRINGE_PEAK_FACTOR = _float("FRINGE_PEAK_FACTOR", 3.0)
INTERACTION_BIAS_LIMIT_UM = _float("INTERACTION_BIAS_LIMIT_UM", 5.0)

# ── Phase statistics ─────────────────────────────────────────────────────────
HISTOGRAM_BIN_DEG = _float("HISTOGRAM_BIN_DEG", 10.0)
NULL_DRAWS = _int("NULL_DRAWS", 100_000)
NULL_SEED = _int("NULL_SEED", 20050101)

# ── Runner ───────────────────────────────────────────────────────────────────
SHOT_FAILURE_LIMIT = _float("SHOT_FAILURE_LIMIT", 0.10)
CROSSING_TARGET_UM = _float("CROSSING_TARGET_UM", 3.4)

# ── Figure pipelines ─────────────────────────────────────────────────────────
TIMELINE_POINTS = _int("TIMELINE_POINTS", 200)
PHASE_FIT_WINDOW_MS = _float("PHASE_FIT_WINDOW_MS", 2.0)
SPACING_MIN_SEPARATION_UM = _float("SPACING_MIN_SEPARATION_UM", 1.0)
SPREAD_TIME_POINTS = _int("SPREAD_TIME_POINTS", 6)
