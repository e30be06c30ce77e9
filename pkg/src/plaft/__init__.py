"""Partly linear AFT models via regularized rank estimation.

Censored log survival times are modeled as a sum of spline-based nonlinear
clinical effects and a linear, optionally lasso-penalized, term for
high-dimensional features.  Fitting minimizes the convex Gehan rank loss
through an equivalent L1 regression over pseudo-data, solved exactly by
linear programming or by a smoothed quasi-Newton continuation method for
wide problems.
"""

from .data import (ColumnSchema, CensoredObservation, Dataset, StandardizationRecord,
                   average_replicates, load_csv, standardize_features, stratified_split,
                   write_csv)
from .errors import (CapabilityError, DegenerateColumnError, DegenerateDataError,
                     DimensionError, FoldDegeneracyError, KnotDegeneracyError, ParseError,
                     PlaftError, SaturationError, ScenarioError, StateError)
from .gehan import (DesignLayout, DesignRow, PairwiseGehanProblem, PenaltySpec,
                    PseudoProblem, append_penalty_rows, augment_penalties,
                    build_pseudo_arrays, build_pseudo_problem, gehan_loss,
                    gehan_loss_from_residuals, penalty_rows)
from .metrics import (MetricsReport, Truth, c_statistic, evaluate_fit, mspe, mspe_for_fit,
                      repeated_split_c, selection_rates, sse)
from .model import ZERO_TOL, FitResult, ModelSpec, fit, fit_additive, predict_risk
from .simgen import (GeneratedData, ModelRecipe, MonteCarloResult, ScenarioSpec,
                     calibrate_censor_width, default_recipes, generate, lasso_linear,
                     lasso_pl, oracle_pl, plain_aft, run_monte_carlo, spline_aft)
from .solver import (SolveOutcome, SolverConfig, smoothed_abs, smoothed_objective, solve,
                     solve_exact_l1, solve_smoothed)
from .splines import AdditiveBasisSpec, SplineBasisSpec, eval_basis, eval_phi, place_knots
from .tuning import (TuningGrid, TuningReport, cross_validate, fit_tuned, fold_assignment,
                     gcv_score, loss_scale, one_se_point, tune_gcv)

__version__ = "0.1.0"
