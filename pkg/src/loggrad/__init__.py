"""Numerical checks of logarithmic gradient bounds for positive solutions of
u_t = Lap u + S(x, t, u) on Euclidean balls and the Poincare disk."""

__version__ = "0.1.0"

from .domain import DomainSpec, DomainError
from .geometry import MetricSpec, euclidean, poincare
from .source import SourceSpec
from .solver import SolutionField, solve_parabolic, pde_residual
from .analytic import analytic_solution
from .estimate import BoundaryTraces, EstimateConstants, boundary_traces
from .verify import BoundReport, EstimateCheck, calibrate_C, check_estimate, compare_bounds, \
    lemma_pi_residual
