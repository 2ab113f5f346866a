"""Nested primal-dual proximal gradient with a warm-started, fixed-budget inner loop.

Solves ``min_u f(u) + g(A u) + h(u)`` for smooth `f`, proximable `g` and `h`
and a linear operator `A`.
"""

from .core import (CompositeProblem, DimensionError, LinearOperator, ProximableTerm, SmoothTerm,
                   adjoint_consistency_check, difference_operator, estimate_operator_norm,
                   identity_operator, least_squares, matrix_operator, objective, squared_distance)
from .diagnostics import (LyapunovUnderflowError, RateReport, a_norm_squared, dual_objective,
                          measure_rate, theoretical_rate)
from .innerloop import InnerResult, dual_fixed_point_converged, inner_budgeted
from .problems import (Instance, make_fused_lasso, make_instance, make_strongly_convex_rate_instance,
                       make_tv_denoise_1d, taut_string_tv)
from .proxlib import (box_indicator, conjugate, fenchel_dual_prox, l1_norm, moreau_envelope,
                      nonnegative_indicator, scale_term, squared_l2, translate_term, zero_term)
from .solver import (ConfigError, SolveOutcome, SolverConfig, SolveTrace, loris_verhoeven_step_solver,
                     nested_primal_dual, optimality_residuals, proximal_gradient)

__version__ = "0.1.0"
