"""EIS to equivalent-circuit model extraction through the distribution of relaxation times."""
from .datatypes import CellDataset, CurrentProfile, ImpedanceSpectrum, OcvCurve
from .drt import DrtConfig, DrtResult, build_tau_grid, compute_drt, select_lambda_lcurve, solve_regularized
from .ecm import EcmModel, ParameterTrend, build_model, model_impedance, parameters_at, warburg_ladder
from .errors import DrtEcmError, DrtEcmWarning
from .kk import KkReport, kk_fit
from .peaks import Attribution, Peak, attribute, detect_peaks, fit_gaussians
from .preprocess import extract_r_ohmic, fit_inductance, preprocess
from .simulate import SimConfig, SimulationResult, simulate

__version__ = "0.1.0"

__all__ = [
    "Attribution", "CellDataset", "CurrentProfile", "DrtConfig", "DrtEcmError", "DrtEcmWarning", "DrtResult",
    "EcmModel", "ImpedanceSpectrum", "KkReport", "OcvCurve", "ParameterTrend", "Peak", "SimConfig",
    "SimulationResult", "attribute", "build_model", "build_tau_grid", "compute_drt", "detect_peaks",
    "extract_r_ohmic", "fit_gaussians", "fit_inductance", "kk_fit", "model_impedance", "parameters_at",
    "preprocess", "select_lambda_lcurve", "simulate", "solve_regularized", "warburg_ladder",
]
