from __future__ import annotations

from enum import Enum, IntEnum


class ColumnKind(str, Enum):
    CONTINUOUS = "continuous"
    # Integer level codes 1..L_j; never discretized.
    CATEGORICAL = "categorical"


class NoiseFamily(str, Enum):
    GAUSSIAN = "gaussian"
    # Student t with 3 degrees of freedom
    STUDENT3 = "student3"
    # Unit-scale Laplace
    LAPLACE = "laplace"


class PenaltyKind(str, Enum):
    BIC = "bic"
    CUSTOM = "custom"


class ExitCode(IntEnum):
    OK = 0
    INVALID_ARGUMENTS = 2
    DATA_ERROR = 3
    NUMERIC_FAILURE = 4


ALL_NOISE_FAMILIES: tuple[NoiseFamily, ...] = (
    NoiseFamily.GAUSSIAN,
    NoiseFamily.STUDENT3,
    NoiseFamily.LAPLACE,
)

# ---------- model-selection defaults ---------------------------------------

DEFAULT_B_MAX = 3
DEFAULT_G_MAX = 3
MIN_BLOCK_SIZE = 3                # |Ω_b| >= 3 for membership in the competing set
DEFAULT_MAX_ITERATIONS = 500
DEFAULT_REL_TOLERANCE = 1e-7
DEFAULT_RESTARTS = 20
ASCENT_SLACK = 1e-8

# ---------- binning ---------------------------------------------------------

DEFAULT_BINS_EXPONENT = 4         # R = max(2, floor(n^(1/k)))
MIN_BINS = 2
BOUNDARY_WIDENING = 1e-9          # outer bin edges widened by this fraction of the range

# ---------- refinement ------------------------------------------------------

DEFAULT_REFINE_MAX_ITERATIONS = 200
DEFAULT_REFINE_TOLERANCE = 1e-8
EMPTY_COMPONENT_WEIGHT = 1e-12
# Largest kernel matrix block (float64 elements, 32 MiB) held at once.
KDE_CHUNK_ELEMENTS = 2**22

# ---------- simulation ------------------------------------------------------

CALIBRATION_SEED = 20_240_517
DEFAULT_CALIBRATION_MC = 200_000
DEFAULT_CALIBRATION_TOL = 0.002

# Full simulation grid for `blockmix sweep`.
SWEEP_SAMPLE_SIZES: tuple[int, ...] = (50, 100, 200, 400)
SWEEP_BLOCK_SIZES: tuple[int, ...] = (6, 9, 12)
SWEEP_TARGET_RATES: tuple[float, ...] = (0.05, 0.10)
SWEEP_BINS_EXPONENTS: tuple[int, ...] = (4, 5, 6, 7)
