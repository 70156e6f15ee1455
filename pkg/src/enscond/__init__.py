"""Energy-enstrophy conditional expectations and the effective cone diffusion."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DegenerateFunctional,
    DriftViolation,
    EnscondError,
    IndexOutOfRange,
    InfeasibleLyapunov,
    InsufficientEffectiveSamples,
    NotPositiveDefinite,
    NumericalDegeneracy,
    OutsideCone,
    StepRejectedTooOften,
    UnequalDelta,
    ValidationError,
    WrongSector,
)
from .spectrum import ForcingConstants, Spectrum, build_spectrum, forcing_constants, load_spectrum, s8  # noqa: E402
from .geometry import ConePoint, SectorLocation, VolumeEstimate, locate_sector  # noqa: E402
from .qfun import QTable, QVector, qhat_eval  # noqa: E402

__all__ = [
    "ConePoint",
    "DegenerateFunctional",
    "DriftViolation",
    "EnscondError",
    "ForcingConstants",
    "IndexOutOfRange",
    "InfeasibleLyapunov",
    "InsufficientEffectiveSamples",
    "NotPositiveDefinite",
    "NumericalDegeneracy",
    "OutsideCone",
    "QTable",
    "QVector",
    "SectorLocation",
    "Spectrum",
    "StepRejectedTooOften",
    "UnequalDelta",
    "ValidationError",
    "VolumeEstimate",
    "WrongSector",
    "build_spectrum",
    "forcing_constants",
    "load_spectrum",
    "locate_sector",
    "qhat_eval",
    "s8",
]
