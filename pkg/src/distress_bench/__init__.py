"""Benchmarking toolkit for corporate bankruptcy prediction.

Eight scoring algorithms behind one train/predict contract, an expanding-window
evaluation harness, predictor construction, permutation importance, PCA
reduction and a competitive credit-market simulation.
"""
from .errors import ConvergenceError, DataError, DistressBenchError, ManifestError, NumericalError
from .panel import DataManifest, Feature, FirmYearRecord, Panel, load_panel, write_panel
from .synthetic import SyntheticSpec, synthesize_panel

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "DataError",
    "DataManifest",
    "DistressBenchError",
    "Feature",
    "FirmYearRecord",
    "ManifestError",
    "NumericalError",
    "Panel",
    "SyntheticSpec",
    "load_panel",
    "synthesize_panel",
    "write_panel",
]
