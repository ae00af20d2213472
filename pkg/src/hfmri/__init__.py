"""Off-the-grid MRI reconstruction: k-space recovery with data-driven tight frames."""

from .core import (
    FormatError,
    Grid,
    InvalidArgument,
    NumericalError,
    ParseError,
    PatchSupport,
    TooLarge,
    ValidationError,
    make_grid,
)
from .frames import FilterBank, analyze, check_uep, edge_map, filters_from_svd, synthesize
from .metrics import QualityReport, hfen, quality_report, snr_db
from .phantom import (
    Ellipse,
    EllipsePhantom,
    SamplingMask,
    add_noise_to_snr,
    default_phantom,
    ellipse_kspace,
    shepp_logan,
    vardensity_mask,
)
from .solver import SolverParams, SolverState, init_state, reconstruct, zero_fill
from .transforms import dft, idft

__version__ = "0.1.0"

__all__ = [
    "FormatError", "Grid", "InvalidArgument", "NumericalError", "ParseError",
    "PatchSupport", "TooLarge", "ValidationError", "make_grid",
    "FilterBank", "analyze", "check_uep", "edge_map", "filters_from_svd", "synthesize",
    "QualityReport", "hfen", "quality_report", "snr_db",
    "Ellipse", "EllipsePhantom", "SamplingMask", "add_noise_to_snr", "default_phantom",
    "ellipse_kspace", "shepp_logan", "vardensity_mask",
    "SolverParams", "SolverState", "init_state", "reconstruct", "zero_fill",
    "dft", "idft",
]
