"""Pseudospectral optimal control toolkit."""
from .legendre import Family, Grid, make_grid
from .nlp import solve as solve_nlp
from .problems import get_problem, problem_ids
from .spectral import Verdict, solve_adaptive, solve_fixed
from .transcribe import Trajectory, transcribe

__version__ = "0.1.0"

__all__ = [
    "Family", "Grid", "make_grid", "solve_nlp", "get_problem", "problem_ids",
    "Verdict", "solve_adaptive", "solve_fixed", "Trajectory", "transcribe",
]
