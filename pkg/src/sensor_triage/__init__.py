"""Streaming PCA-driven sensor triage under a bandwidth budget."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .acquire import AcquisitionMask, acquire, reconstruct, sample_mask, send_on_delta
from .data import DataError, Dataset, load_csv, parse_synthetic, perturb, standardize
from .evaluation import EvalReport, knn_f1, pareto_sweep, reaction_time
from .ipca import PcaState, ipca_partial_fit
from .triage import InfeasibleBudgetError, TriageConfig, run_triage, triage_step

__all__ = [
    "BACKEND", "AcquisitionMask", "DataError", "Dataset", "EvalReport",
    "InfeasibleBudgetError", "PcaState", "TriageConfig", "__version__", "acquire",
    "ipca_partial_fit", "knn_f1", "load_csv", "pareto_sweep", "parse_synthetic",
    "perturb", "reaction_time", "reconstruct", "run_triage", "sample_mask",
    "send_on_delta", "standardize", "triage_step",
]
