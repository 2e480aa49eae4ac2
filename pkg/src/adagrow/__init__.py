"""Generalization guarantees for adaptive data analysis on growing datasets."""

from .bounds import (AccuracySpec, BoundResult, Method, adaptive_filter_bound, jung_plus_static_alpha,
                     jung_static_alpha, lambda_objective, max_queries, ours_bound, split_alpha_to_n,
                     split_max_k)
from .exceptions import (DomainError, FilterTerminated, FilterUsageError, InteractionError,
                         OptimizationError, StateSpaceTooLarge)
from .privacy import (DeltaCurve, FilterState, RhoCurve, compose_rho, filter_charge, gamma_star,
                      gauss_rho_curve, psi, zcdp_to_approx_dp)
from .schedule import GrowthSchedule, QueryAllocation, batch_allocation, validate_allocation
from .specfun import erfc, erfc_inv

__version__ = "0.1.0"
