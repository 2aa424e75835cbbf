from .cones import (ConeSpec, Nonnegative, SecondOrder, SemidefiniteReal, hermitian_embed,
                    hermitian_unembed, smat, svec)
from .ipm import ConicProblem, ConicSolution, SolverError, Status, solve
from .textio import dump_problem, load_problem

__all__ = [
    "ConeSpec", "Nonnegative", "SecondOrder", "SemidefiniteReal", "smat", "svec",
    "hermitian_embed", "hermitian_unembed",
    "ConicProblem", "ConicSolution", "SolverError", "Status", "solve",
    "dump_problem", "load_problem",
]
