"""Convolutional sparse coding with dual-domain ADMM and conjugate-gradient solvers."""

__version__ = "0.1.0"

from .exceptions import DimensionError, NumericalError
from .core import (ConvergenceTrace, Dictionary, ObjectiveBreakdown, SignalTensor,
                   SolverConfig, SparseMaps, TraceRecord, evaluate_dataset_objective,
                   evaluate_objective, reconstruct)
from .coding import CodingDualState, solve_coding
from .learning import LearningDualState, solve_learning
from .tcsc import BlockSpectrumDictionary, build_block_spectra, solve_coding_tcsc, \
    solve_learning_tcsc
from .pipeline import Dataset, RunConfig, init_variables, normalize, run_csc
from .estimator import ConvolutionalSparseCoding

__all__ = [
    "BlockSpectrumDictionary", "CodingDualState", "ConvergenceTrace",
    "ConvolutionalSparseCoding", "Dataset", "Dictionary", "DimensionError",
    "LearningDualState", "NumericalError", "ObjectiveBreakdown", "RunConfig",
    "SignalTensor", "SolverConfig", "SparseMaps", "TraceRecord", "build_block_spectra",
    "evaluate_dataset_objective", "evaluate_objective", "init_variables", "normalize",
    "reconstruct", "run_csc", "solve_coding", "solve_coding_tcsc", "solve_learning",
    "solve_learning_tcsc",
]
