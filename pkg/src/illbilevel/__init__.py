"""Certified solvers for a nonconvex bilevel family that is unstable under
eps-feasibility, and an exact stability toolkit for linear bilevel programs."""

from importlib.metadata import PackageNotFoundError, version

from .eps_analysis import (
    EpsScenario,
    GapReport,
    Mode,
    eps_threshold,
    gap_sweep,
    min_n_for_eps,
    solve_bilevel_eps,
    superoptimality_certificate,
)
from .errors import (
    AssumptionViolation,
    CertificateError,
    DimensionError,
    EpsBelowThreshold,
    HypothesisViolation,
    IllBilevelError,
    InconclusiveEnclosure,
    LimitExceeded,
    PrecisionExhausted,
)
from .exact_lower import (
    ExactBilevelSolution,
    ExactLowerSolution,
    brute_force_lower,
    root_of_h,
    slater_check,
    solve_bilevel_exact,
    solve_lower_exact,
)
from .instance import FollowerPoint, InstanceParams, LeaderPoint, is_eps_feasible, is_feasible
from .kkt_cert import KktCertificate, Multipliers, certify_kkt, compute_multipliers
from .linlin_stability import (
    LinearBilevelInstance,
    NearFeasibleTriple,
    StabilityReport,
    compute_kappas,
    repair_near_feasible,
)
from .lp_core import KappaBound, LinearProgram, LpSolution, kappa_of, nearly_optimal_bound_check, solve_lp
from .scalars import Enclosure, PrecReal

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

__all__ = [
    "AssumptionViolation",
    "CertificateError",
    "DimensionError",
    "Enclosure",
    "EpsBelowThreshold",
    "EpsScenario",
    "ExactBilevelSolution",
    "ExactLowerSolution",
    "FollowerPoint",
    "GapReport",
    "HypothesisViolation",
    "IllBilevelError",
    "InconclusiveEnclosure",
    "InstanceParams",
    "KappaBound",
    "KktCertificate",
    "LeaderPoint",
    "LimitExceeded",
    "LinearBilevelInstance",
    "LinearProgram",
    "LpSolution",
    "Mode",
    "Multipliers",
    "NearFeasibleTriple",
    "PrecReal",
    "PrecisionExhausted",
    "StabilityReport",
    "brute_force_lower",
    "certify_kkt",
    "compute_kappas",
    "compute_multipliers",
    "eps_threshold",
    "gap_sweep",
    "is_eps_feasible",
    "is_feasible",
    "kappa_of",
    "min_n_for_eps",
    "nearly_optimal_bound_check",
    "repair_near_feasible",
    "root_of_h",
    "slater_check",
    "solve_bilevel_eps",
    "solve_bilevel_exact",
    "solve_lower_exact",
    "solve_lp",
    "superoptimality_certificate",
]
