"""Low-rank matrix recovery by variance-reduced stochastic hard thresholding."""

from .errors import (ConfigParseError, ConfigurationError, DegenerateStepError, DivergenceError,
                     DomainError, FormatError, InvalidInputError, InvalidRankError, RecoveryError)
from .linalg import (SubspaceProjector, SvdFactors, hard_threshold_rank, numerical_rank,
                     project_span, soft_threshold_singular, span_of, svd)
from .operators import (MeasurementOp, ProblemInstance, apply_op, estimate_subspace_rip,
                        full_gradient, objective, stochastic_gradient, variance_reduced_direction)
from .solvers import (BarzilaiBorwein, FixedStep, RecoveryResult, SolverConfig, SolveTrace,
                      Termination, TheoryGuided, bb_step, niht, stoiht, svp, svrg_arm, svt)
from .theory import (complexity_estimate, convergence_constants, lemma_checker,
                     theorem1_interval, theorem2_interval)

__version__ = "0.1.0"
