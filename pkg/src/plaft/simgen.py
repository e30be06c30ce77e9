"""Seeded data generators and the Monte Carlo benchmark harness.

Three designs are provided:

* ``estimation``: one feature Z ~ N(0,1), one clinical covariate
  X = 0.25 Z + U(-5,5), coefficient 1 on Z, error N(0,1), censoring
  C = phi(X) + Z + U(0,1).  phi is 2x, x^2 or 2x^2.
* ``selection``: d = 8 features, AR(1) correlation rho^|j-k|,
  X = 0.5(Z1+Z2+Z3) + U(-1,1), coefficients (D,D,0,0,0,D,0,0) with effect
  size D, piecewise-cubic phi, censoring C = systematic + U(0,6).
* ``highdim``: n = 100, d >= 100, coefficients 1 at positions 1, 26, 51,
  76 (1-based), X = 0.5(Z10+Z35+Z60) + U(-1,1), same phi, censoring width
  calibrated once by bisection to hit ~40% censoring.

Everything is a pure function of the scenario seed; Monte Carlo replicates
derive child seeds from the master seed with a fixed splitting rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset
from .errors import ScenarioError
from .gehan import PenaltySpec
from .metrics import MetricsReport, Truth, evaluate_fit
from .model import FitResult, ModelSpec, fit
from .solver import SolverConfig
from .tuning import TuningGrid, fit_tuned

__all__ = [
    "ScenarioSpec",
    "GeneratedData",
    "ModelRecipe",
    "generate",
    "run_monte_carlo",
    "MonteCarloResult",
    "calibrate_censor_width",
    "lasso_pl",
    "lasso_linear",
    "plain_aft",
    "spline_aft",
    "oracle_pl",
    "default_recipes",
]

DESIGNS = ("estimation", "selection", "highdim")
PHI_KINDS = ("linear_2x", "quadratic_x2", "quadratic_2x2", "cubic_hinge")
HIGHDIM_CENSORING_TARGET = 0.40
_CALIBRATION_SEED = 20110131
_ORACLE_LAMBDA = 1e9

_censor_width_registry = {}


def phi_function(kind):
    if kind == "linear_2x":
        return lambda x: 2.0 * x
    if kind == "quadratic_x2":
        return lambda x: x * x
    if kind == "quadratic_2x2":
        return lambda x: 2.0 * x * x
    if kind == "cubic_hinge":
        return lambda x: np.where(x >= 0, 0.2 * x + 0.5 * x ** 2 + 0.15 * x ** 3, 0.05 * x)
    raise ScenarioError("unknown phi kind %r" % kind)


def calibrate_censor_width(target, pilot=100_000, seed=_CALIBRATION_SEED):
    """Width w such that censoring P(eps > U(0,w)) hits the target, found by
    bisection on a fixed pilot sample.  The systematic parts of T and C
    cancel, so the rate depends on w alone.  Results are cached."""
    key = (round(float(target), 6), pilot, seed)
    if key in _censor_width_registry:
        return _censor_width_registry[key]
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal(pilot)
    u01 = rng.uniform(0.0, 1.0, pilot)
    lo, hi = 1e-9, 100.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if float(np.mean(eps > mid * u01)) > target:
            lo = mid  # censoring rate decreases in w
        else:
            hi = mid
    width = 0.5 * (lo + hi)
    _censor_width_registry[key] = width
    return width


@dataclass(frozen=True)
class ScenarioSpec:
    """Parameters of one simulation design; illegal combinations raise
    ScenarioError at construction."""

    design: str
    n: int = 100
    d: int | None = None
    rho: float = 0.0
    delta: float = 1.0
    phi_kind: str | None = None
    censor_width: float | None = None
    seed: int = 0
    test_multiple: int = 10

    def __post_init__(self):
        if self.design not in DESIGNS:
            raise ScenarioError("design must be one of %s" % (DESIGNS,))
        if not 0 <= self.rho < 1:
            raise ScenarioError("rho must be in [0, 1)")
        if self.n < 20:
            raise ScenarioError("n must be >= 20")
        if self.design == "estimation":
            object.__setattr__(self, "d", 1 if self.d is None else self.d)
            object.__setattr__(self, "phi_kind", self.phi_kind or "quadratic_x2")
            object.__setattr__(self, "censor_width",
                               1.0 if self.censor_width is None else self.censor_width)
            if self.d != 1:
                raise ScenarioError("estimation design has a single feature (d=1)")
            if self.rho != 0.0:
                raise ScenarioError("estimation design has no feature correlation")
            if self.phi_kind not in ("linear_2x", "quadratic_x2", "quadratic_2x2"):
                raise ScenarioError("estimation design needs a linear or quadratic phi")
        elif self.design == "selection":
            object.__setattr__(self, "d", 8 if self.d is None else self.d)
            object.__setattr__(self, "phi_kind", self.phi_kind or "cubic_hinge")
            object.__setattr__(self, "censor_width",
                               6.0 if self.censor_width is None else self.censor_width)
            if self.d != 8:
                raise ScenarioError("selection design is defined for d=8")
            if self.phi_kind != "cubic_hinge":
                raise ScenarioError("selection design uses the piecewise-cubic phi")
            if self.delta <= 0:
                raise ScenarioError("effect size delta must be positive")
        else:
            object.__setattr__(self, "d", 100 if self.d is None else self.d)
            object.__setattr__(self, "phi_kind", self.phi_kind or "cubic_hinge")
            if self.d < 100:
                raise ScenarioError("highdim design needs d >= 100")
            if self.phi_kind != "cubic_hinge":
                raise ScenarioError("highdim design uses the piecewise-cubic phi")
        if self.censor_width is not None and self.censor_width < 0:
            raise ScenarioError("censor_width must be nonnegative")
        if self.test_multiple < 1:
            raise ScenarioError("test_multiple must be >= 1")

    def resolved_censor_width(self):
        if self.censor_width is not None:
            return self.censor_width
        return calibrate_censor_width(HIGHDIM_CENSORING_TARGET)

    def true_vartheta(self):
        if self.design == "estimation":
            return np.array([1.0])
        if self.design == "selection":
            vt = np.zeros(8)
            vt[[0, 1, 5]] = self.delta
            return vt
        vt = np.zeros(self.d)
        vt[[0, 25, 50, 75]] = 1.0
        return vt

    def x_weights(self):
        w = np.zeros(self.d)
        if self.design == "estimation":
            w[0] = 0.25
        elif self.design == "selection":
            w[[0, 1, 2]] = 0.5
        else:
            w[[9, 34, 59]] = 0.5
        return w

    def u_range(self):
        return (-5.0, 5.0) if self.design == "estimation" else (-1.0, 1.0)

    def truth(self) -> Truth:
        phi = phi_function(self.phi_kind)
        return Truth(self.true_vartheta(), lambda clinical: phi(np.atleast_2d(clinical)[:, 0]))


@dataclass(frozen=True)
class GeneratedData:
    train: Dataset
    test: Dataset
    truth: Truth
    test_true_log_times: np.ndarray  # uncensored log times of the test sample
    censor_width: float
    spec: ScenarioSpec


def _ar1_normal(rng, m, d, rho):
    e = rng.standard_normal((m, d))
    if rho == 0.0 or d == 1:
        return e
    Z = np.empty_like(e)
    Z[:, 0] = e[:, 0]
    c = np.sqrt(1.0 - rho * rho)
    for j in range(1, d):
        Z[:, j] = rho * Z[:, j - 1] + c * e[:, j]
    return Z


def _draw(spec: ScenarioSpec, rng, m, width):
    Z = _ar1_normal(rng, m, spec.d, spec.rho)
    lo, hi = spec.u_range()
    U = rng.uniform(lo, hi, m)
    X = Z @ spec.x_weights() + U
    phi = phi_function(spec.phi_kind)
    systematic = phi(X) + Z @ spec.true_vartheta()
    eps = rng.standard_normal(m)
    T = systematic + eps
    C = systematic + rng.uniform(0.0, width, m)
    observed = np.minimum(T, C)
    events = T <= C
    return Dataset(observed, events, X.reshape(-1, 1), Z), T


def generate(spec: ScenarioSpec) -> GeneratedData:
    """Draw one train/test pair; a pure function of spec.seed."""
    rng = np.random.default_rng(spec.seed)
    width = spec.resolved_censor_width()
    train, _ = _draw(spec, rng, spec.n, width)
    test, t_true = _draw(spec, rng, spec.test_multiple * spec.n, width)
    return GeneratedData(train, test, spec.truth(), t_true, width, spec)


# ---------------------------------------------------------------------------
# Monte Carlo harness


def _search_solver():
    # cheaper continuation for the many fits of a tuning search
    return SolverConfig(smoothing_eps_scale=0.01, continuation_factor=0.01,
                        max_iterations=150, polish_sweeps=2)


@dataclass(frozen=True)
class ModelRecipe:
    """How to build and tune one comparator model on a generated dataset.

    Lasso recipes tune by K-fold CV and take the one-standard-error
    parsimony pick; spline-only recipes tune the knot penalty by GCV.
    Search fits run on a cheap solver budget; the final fit at the chosen
    penalties always uses the full-quality solver.
    """

    name: str
    nonlinear: bool = True
    n_knots: int = 6
    tune: str | None = "gcv"
    select: str = "min"
    tune_gamma: bool = True
    tune_lambda: bool = True
    n_gamma: int = 3
    n_lambda: int = 10
    gamma: float = 0.0
    lam: float = 0.0
    oracle: bool = False
    folds: int = 5
    search_solver: SolverConfig = field(default_factory=_search_solver)
    final_solver: SolverConfig = field(default_factory=SolverConfig)

    def model_spec(self) -> ModelSpec:
        nl = (0,) if self.nonlinear else ()
        return ModelSpec(nonlinear_covariates=nl, n_knots=self.n_knots,
                         penalty=PenaltySpec(self.gamma, self.lam),
                         solver=self.search_solver if self.tune else self.final_solver)

    def fit(self, ds: Dataset, truth: Truth, seed=0) -> FitResult:
        spec = self.model_spec()
        lam_fixed = None
        tune_lambda = self.tune_lambda
        if self.oracle:
            lam_fixed = np.where(truth.vartheta == 0.0, _ORACLE_LAMBDA, 0.0)
            tune_lambda = False
        if self.tune is None:
            if lam_fixed is not None:
                spec = spec.with_penalty(lam=lam_fixed)
            return fit(ds, spec)
        grid = TuningGrid.default(ds, n_gamma=self.n_gamma, n_lambda=self.n_lambda,
                                  folds=self.folds, seed=seed,
                                  tune_gamma=self.tune_gamma and self.nonlinear,
                                  tune_lambda=tune_lambda)
        fr, _ = fit_tuned(ds, spec, grid, criterion=self.tune, lam_fixed=lam_fixed,
                          final_solver=self.final_solver, select=self.select)
        return fr


def lasso_pl(r=6, **kw):
    kw.setdefault("tune", "cv")
    kw.setdefault("select", "1se")
    return ModelRecipe("lasso_pl", nonlinear=True, n_knots=r, **kw)


def lasso_linear(**kw):
    kw.setdefault("tune", "cv")
    kw.setdefault("select", "1se")
    return ModelRecipe("lasso_l", nonlinear=False, tune_gamma=False, **kw)


def plain_aft(**kw):
    return ModelRecipe("aft", nonlinear=False, tune=None, gamma=0.0, lam=0.0, **kw)


def spline_aft(r=2, **kw):
    return ModelRecipe("pl_aft", nonlinear=True, n_knots=r, tune="gcv",
                       tune_lambda=False, n_gamma=10, **kw)


def oracle_pl(r=6, **kw):
    return ModelRecipe("oracle", nonlinear=True, n_knots=r, tune="gcv",
                       tune_lambda=False, n_gamma=10, oracle=True, **kw)


def default_recipes(design):
    if design == "estimation":
        return (spline_aft(2), plain_aft())
    if design == "selection":
        return (lasso_pl(6), lasso_linear(), plain_aft(), oracle_pl(6))
    return (lasso_pl(6), lasso_linear())


@dataclass
class ReplicateOutcome:
    replicate: int
    seed: int
    reports: dict        # recipe name -> MetricsReport
    varthetas: dict      # recipe name -> raw-scale feature coefficients
    errors: dict         # recipe name -> error message (flagged, not dropped)


@dataclass
class MonteCarloResult:
    scenario: ScenarioSpec
    recipes: tuple
    outcomes: list
    truth: Truth

    METRICS = ("sse", "p_c", "p_i", "mspe1", "mspe2", "c_statistic")

    def metric_values(self, name, metric):
        vals = []
        for oc in self.outcomes:
            rep = oc.reports.get(name)
            if rep is None:
                continue
            v = getattr(rep, metric)
            if v is not None:
                vals.append(v)
        return np.array(vals, dtype=float)

    def vartheta_matrix(self, name):
        rows = [oc.varthetas[name] for oc in self.outcomes if name in oc.varthetas]
        return np.array(rows, dtype=float)

    def coefficient_bias(self, name):
        return self.vartheta_matrix(name).mean(axis=0) - self.truth.vartheta

    def coefficient_mse(self, name):
        diff = self.vartheta_matrix(name) - self.truth.vartheta
        return (diff ** 2).mean(axis=0)

    def flagged(self):
        return [(oc.replicate, name, msg) for oc in self.outcomes
                for name, msg in oc.errors.items()]

    def aggregate_rows(self):
        rows = []
        for rec in self.recipes:
            row = {"model": rec.name,
                   "n_ok": sum(1 for oc in self.outcomes if rec.name in oc.reports)}
            for metric in self.METRICS:
                vals = self.metric_values(rec.name, metric)
                if vals.size:
                    row[metric] = float(vals.mean())
                    row["se_" + metric] = (float(vals.std(ddof=1) / np.sqrt(vals.size))
                                           if vals.size > 1 else 0.0)
                else:
                    row[metric] = None
                    row["se_" + metric] = None
            rows.append(row)
        return rows

    def to_csv(self, path):
        """Aggregate table, one row per model; values multiplied by 1000
        (column names carry the _x1000 flag)."""
        rows = self.aggregate_rows()
        cols = ["model", "n_ok"]
        for metric in self.METRICS:
            cols += [metric + "_x1000", "se_" + metric + "_x1000"]
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for row in rows:
                out = [row["model"], str(row["n_ok"])]
                for metric in self.METRICS:
                    for key in (metric, "se_" + metric):
                        v = row[key]
                        out.append("" if v is None else repr(1000.0 * v))
                fh.write(",".join(out) + "\n")


def replicate_seed(master_seed, replicate):
    """Fixed splitting rule for per-replicate child seeds."""
    return int(np.random.SeedSequence([int(master_seed) & 0xFFFFFFFF,
                                       0x5EED, replicate]).generate_state(1)[0])


def _run_replicate(spec: ScenarioSpec, recipes, replicate):
    seed = replicate_seed(spec.seed, replicate)
    data = generate(replace(spec, seed=seed))
    reports, varthetas, errors = {}, {}, {}
    for rec in recipes:
        try:
            fr = rec.fit(data.train, data.truth, seed=seed)
            reports[rec.name] = evaluate_fit(fr, data.test, truth=data.truth)
            varthetas[rec.name] = fr.feature_coefficients(raw=True)
        except Exception as exc:  # flag, never silently drop
            errors[rec.name] = "%s: %s" % (type(exc).__name__, exc)
    return ReplicateOutcome(replicate, seed, reports, varthetas, errors)


def run_monte_carlo(spec: ScenarioSpec, recipes=None, replicates=10,
                    n_jobs=1) -> MonteCarloResult:
    """Generate, fit and score every recipe on `replicates` independent
    datasets; metrics are evaluated on each replicate's test sample.
    Fully reproducible from (spec.seed, spec, recipes)."""
    recipes = tuple(recipes) if recipes is not None else default_recipes(spec.design)
    if replicates < 1:
        raise ScenarioError("replicates must be >= 1")
    if n_jobs != 1:
        from joblib import Parallel, delayed
        outcomes = Parallel(n_jobs=n_jobs)(
            delayed(_run_replicate)(spec, recipes, r) for r in range(replicates))
    else:
        outcomes = [_run_replicate(spec, recipes, r) for r in range(replicates)]
    return MonteCarloResult(spec, recipes, list(outcomes), spec.truth())
