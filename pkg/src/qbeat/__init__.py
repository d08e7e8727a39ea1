"""Hyperfine quantum-beat polarization models and fits."""

from .angular import HalfInt, sixj, sixj_exact_square, triangle_ok
from .beat_model import (
    CS_GEOMETRY,
    DetectionGeometry,
    PulseModel,
    g2,
    polarization_cs,
    polarization_general,
    simulate,
    smear_factor,
)
from .dataset import BeatDataset, BeatPoint, load_dataset, load_table1
from .errors import (
    ConvergenceError,
    DomainError,
    InvalidArgument,
    ParseError,
    ProfileError,
    QBeatError,
    ValidationError,
)
from .fitting import FitConfig, FitParams, FitResult, chi2, fit, residual_report, uncertainties
from .hyperfine import CS_8P32, BeatSpectrum, HyperfineSystem, beat_spectrum, energy_shift, f_values

__version__ = "0.1.0"
