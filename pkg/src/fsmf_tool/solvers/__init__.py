"""
Solvers for fixed-support matrix factorization.
"""

from .direct import DirectSolver
from .iterative import IterativeSolver

__all__ = ["DirectSolver", "IterativeSolver"]
