"""Right-inverse solvers for nonlinear equations that lose derivatives.

Periodic functions on a grid carry a graded family of norms; problems supply
``F``, ``DF`` and a right inverse ``L`` with tame constants, and the solvers
minimize a weighted multi-norm residual along ``-L(x)(F(x) - y)``.
"""

from .errors import (ConditionViolation, ConfigError, EpsilonTooLarge, OutsideBall,
                     RadiusExceeded, SingularInverse, TameInvError)
from .graded_space import (ControlledBound, Flavor, FrechetMetric, GradedElement, NormFamily,
                           controlled_constant, metric_distance, norm, trig_element)
from .problems import (ImplicitFamily, TameConstants, TameProblem, estimate_tame_constants,
                       implicit_linear_family, implicit_nonlinear_family, make_problem,
                       problem_linear_transport, problem_nonlinear_transport)
from .records import CheckResult
from .smoothing import SmoothingFamily, smooth, standard_sequence, verify_smoothing_axioms
from .solver import (SolveOptions, SolveReport, Status, continuation_solve, descent_solve,
                     finite_regularity_solve, implicit_solve, newton_solve, solve)
from .verify import (SubdifferentialElement, check_directional_derivative,
                     check_lipschitz_inverse, check_local_surjection, run_suite,
                     subdifferential_element)
from .weights import (WeightSequence, build_weights, check_radius_condition, check_summability,
                      ekeland_ratio, merit)

__version__ = "0.1.0"
