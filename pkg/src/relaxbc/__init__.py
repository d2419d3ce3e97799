"""Boundary conditions for linear relaxation systems, with asymptotic and numerical checks."""

__version__ = "0.1.0"

from .asymptotics import AsymptoticSolution, build_asymptotic
from .compat import compat_pipeline
from .construct import PRESET_FAMILIES, ConstructedBC, ConstructionParams, construct, preset
from .errors import RelaxBCError
from .gkc import Certificate, SamplingSpec, certify, gkc_ratio
from .harness import ExperimentSpec, RateTable, convergence_study, emit_report, load_problem
from .model import SpectralModel, build_model, given_bc
from .signals import SmoothProfile, SmoothSignal
from .solver import Grid1D, run, run_problem

__all__ = [
    "AsymptoticSolution",
    "Certificate",
    "ConstructedBC",
    "ConstructionParams",
    "ExperimentSpec",
    "Grid1D",
    "PRESET_FAMILIES",
    "RateTable",
    "RelaxBCError",
    "SamplingSpec",
    "SmoothProfile",
    "SmoothSignal",
    "SpectralModel",
    "build_asymptotic",
    "build_model",
    "certify",
    "compat_pipeline",
    "construct",
    "convergence_study",
    "emit_report",
    "given_bc",
    "gkc_ratio",
    "load_problem",
    "preset",
    "run",
    "run_problem",
]
