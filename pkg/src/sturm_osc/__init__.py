"""Sturm-Liouville eigenpairs, and zero counting for finite eigenfunction sums."""

from .combo import (
    Combination,
    Family,
    combination,
    evaluate_combination,
    limit_certificate,
    liouville_determinant,
    liouville_w,
    orthogonality_integral,
    relation_residual,
    shift_k,
)
from .errors import *  # noqa: F401,F403
from .expr import differentiate, evaluate, parse, to_text
from .problem import BoundaryCondition, Problem, Regularity, load_problem, parse_problem, sine_problem, validate
from .spectrum import EigenPair, Spectrum, compute_eigenvalue, compute_spectrum, mismatch
from .verify import (
    ProblemGenerator,
    VerificationReport,
    check_monotonicity,
    check_st2,
    evolve_heat,
    random_suite,
    sturm_hurwitz_check,
)
from .zeros import ZeroCount, ZeroRecord, count, locate_zeros, multiplicity, reduced_multiplicity

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "BoundaryCondition",
    "check_monotonicity",
    "check_st2",
    "Combination",
    "combination",
    "compute_eigenvalue",
    "compute_spectrum",
    "count",
    "differentiate",
    "EigenPair",
    "evaluate",
    "evaluate_combination",
    "evolve_heat",
    "Family",
    "limit_certificate",
    "liouville_determinant",
    "liouville_w",
    "load_problem",
    "locate_zeros",
    "mismatch",
    "multiplicity",
    "orthogonality_integral",
    "parse",
    "parse_problem",
    "Problem",
    "ProblemGenerator",
    "random_suite",
    "reduced_multiplicity",
    "Regularity",
    "relation_residual",
    "shift_k",
    "sine_problem",
    "Spectrum",
    "sturm_hurwitz_check",
    "to_text",
    "validate",
    "VerificationReport",
    "ZeroCount",
    "ZeroRecord",
]
