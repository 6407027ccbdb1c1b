"""
FSMF Tool - Fixed-support matrix factorization.

Tractability certificates, exact blockwise-SVD solvers, first-order baselines
and landscape experiments.
"""

__version__ = "0.1.0"

from .analysis import CertificateLevel, TractabilityCertificate, certify
from .errors import CertificateMismatch, FsmfError
from .models import (
    FactorPair,
    IterativeConfig,
    Method,
    ProblemInstance,
    SolveReport,
    SupportMask,
    SupportPair,
)
from .objective import loss, masked_gradient
from .solvers import DirectSolver, IterativeSolver

__all__ = [
    "CertificateLevel",
    "CertificateMismatch",
    "DirectSolver",
    "FactorPair",
    "FsmfError",
    "IterativeConfig",
    "IterativeSolver",
    "Method",
    "ProblemInstance",
    "SolveReport",
    "SupportMask",
    "SupportPair",
    "TractabilityCertificate",
    "certify",
    "loss",
    "masked_gradient",
]
