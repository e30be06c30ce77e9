"""Partly linear AFT estimators and risk-score prediction.

The model for log event time is

    T = phi_1(x_{c1}) + ... + phi_qnl(x_{cqnl}) + vartheta' [x_lin, z]

where the phi_j are spline functions of selected clinical covariates, x_lin
are the remaining clinical covariates (entering linearly) and z are the
high-dimensional features.  Fitting minimizes

    gehan_loss + gamma * sum_knots |beta_m| + sum_j lambda_j |vartheta_j|

through the pseudo L1 regression (see :mod:`plaft.gehan`).  The penalty
values supplied here are on the scale of the (n^-2 normalized) rank loss;
the pseudo objective equals 2 n^2 times that loss plus a constant, so the
augmentation rows carry the penalties multiplied by 2 n^2, which leaves the
minimizer identical.

The rank loss is translation invariant, so phi is identified only up to an
additive constant; reported nonlinear effects are anchored at phi_j(0) = 0.
Because the pseudo rows are differences of design rows, this anchoring is a
pure reporting convention and does not affect the fitted coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset, StandardizationRecord, standardize_features
from .errors import DimensionError, ParseError
from .gehan import (DEFAULT_ZETA_FACTOR, DesignLayout, PairwiseGehanProblem, PenaltySpec,
                    append_penalty_rows, build_pseudo_arrays, gehan_loss, penalty_rows)
from .solver import SolverConfig, solve, solve_smoothed
from .splines import (DEFAULT_DEGREE, AdditiveBasisSpec, SplineBasisSpec, eval_phi,
                      place_knots)

__all__ = ["ModelSpec", "FitResult", "fit", "fit_additive", "predict_risk", "ZERO_TOL"]

# Coefficients below this magnitude are reported as exactly zero; the
# smoothed solver pins inactive penalized coordinates far below it.
ZERO_TOL = 1e-8


def penalty_scale(n):
    """Factor mapping loss-scale penalties onto pseudo-row weights."""
    return 2.0 * n * n


@dataclass(frozen=True)
class ModelSpec:
    """Model structure, penalties and solver settings.

    nonlinear_covariates lists clinical columns modeled with splines; the
    rest enter linearly (linear_clinical=None means "all others").  When
    basis is None, knots are placed at equally spaced percentiles of the
    training values (n_knots per covariate, cubic by default).
    penalty.lam may be a scalar or a length-d per-feature vector; clinical
    covariates modeled linearly are not penalized unless penalize_clinical.
    """

    nonlinear_covariates: tuple = ()
    basis: AdditiveBasisSpec | None = None
    linear_clinical: tuple | None = None
    penalty: PenaltySpec = field(default_factory=PenaltySpec)
    solver: SolverConfig = field(default_factory=SolverConfig)
    degree: int = DEFAULT_DEGREE
    n_knots: int = 10
    penalize_clinical: bool = False
    standardize: bool = True
    zeta_factor: float = DEFAULT_ZETA_FACTOR

    def __post_init__(self):
        object.__setattr__(self, "nonlinear_covariates",
                           tuple(int(c) for c in self.nonlinear_covariates))
        if self.linear_clinical is not None:
            object.__setattr__(self, "linear_clinical",
                               tuple(int(c) for c in self.linear_clinical))
        if self.basis is not None and len(self.basis) != len(self.nonlinear_covariates):
            raise DimensionError("basis count != nonlinear covariate count")

    def with_penalty(self, gamma=None, lam=None):
        pen = PenaltySpec(self.penalty.gamma if gamma is None else gamma,
                          self.penalty.lam if lam is None else lam,
                          self.penalty.penalize_all_beta)
        return replace(self, penalty=pen)

    def resolve(self, ds: Dataset) -> "ModelSpec":
        """Fill in defaults that depend on the data: linear clinical indices
        and knot placement."""
        q = ds.q
        for c in self.nonlinear_covariates:
            if not 0 <= c < q:
                raise DimensionError("nonlinear covariate index %d out of range" % c)
        lin = self.linear_clinical
        if lin is None:
            lin = tuple(c for c in range(q) if c not in self.nonlinear_covariates)
        for c in lin:
            if not 0 <= c < q:
                raise DimensionError("linear clinical index %d out of range" % c)
        overlap = set(lin) & set(self.nonlinear_covariates)
        if overlap:
            raise DimensionError("clinical indices %s are both nonlinear and linear"
                                 % sorted(overlap))
        basis = self.basis
        if basis is None:
            basis = AdditiveBasisSpec(tuple(
                SplineBasisSpec(self.degree, tuple(place_knots(ds.clinical[:, c], self.n_knots)))
                for c in self.nonlinear_covariates))
        return replace(self, basis=basis, linear_clinical=lin)

    def layout(self, d) -> DesignLayout:
        if self.basis is None or self.linear_clinical is None:
            raise DimensionError("spec not resolved; call resolve(ds) first")
        return DesignLayout(self.basis, self.nonlinear_covariates, self.linear_clinical, d)

    def lam_full(self, d):
        """Per-coefficient penalty weights over the linear block
        [clinical-linear..., features...]."""
        lam = np.asarray(self.penalty.lam, dtype=float)
        feat = np.full(d, float(lam)) if lam.ndim == 0 else lam
        if feat.shape != (d,):
            raise DimensionError("per-feature lambda length %d != d=%d" % (feat.size, d))
        n_clin = len(self.linear_clinical)
        clin = (np.full(n_clin, float(lam.mean()) if lam.ndim else float(lam))
                if self.penalize_clinical else np.zeros(n_clin))
        return np.concatenate([clin, feat])


class FitResult:
    """Fitted model: spline coefficients, linear coefficients, penalties,
    standardization record and solver diagnostics.

    Coefficients are reported on the standardized-feature scale; entries
    with magnitude below ZERO_TOL are stored as exact zeros.  `selected`
    holds the support of the linear coefficient vector.
    """

    def __init__(self, beta_hat, vartheta_hat, spec: ModelSpec, gamma, lam_vector,
                 objective, standardization: StandardizationRecord, converged,
                 iterations, method_used, train_fingerprint="", n_train=0):
        self.beta_hat = np.asarray(beta_hat, dtype=float)
        self.vartheta_hat = np.asarray(vartheta_hat, dtype=float)
        self.spec = spec
        self.gamma = float(gamma)
        self.lam_vector = np.asarray(lam_vector, dtype=float)
        self.objective = float(objective)
        self.standardization = standardization
        self.converged = bool(converged)
        self.iterations = int(iterations)
        self.method_used = method_used
        self.train_fingerprint = train_fingerprint
        self.n_train = int(n_train)

    @property
    def d(self):
        return self.standardization.means.shape[0]

    @property
    def layout(self) -> DesignLayout:
        return self.spec.layout(self.d)

    @property
    def selected(self):
        return tuple(int(j) for j in np.flatnonzero(self.vartheta_hat != 0.0))

    @property
    def n_clinical_linear(self):
        return len(self.spec.linear_clinical)

    @property
    def clinical_coefficients(self):
        return self.vartheta_hat[: self.n_clinical_linear]

    def feature_coefficients(self, raw=False):
        coefs = self.vartheta_hat[self.n_clinical_linear:]
        return coefs / self.standardization.sds if raw else coefs

    @property
    def selected_features(self):
        return tuple(int(j) for j in np.flatnonzero(self.feature_coefficients() != 0.0))

    def df(self):
        """Number of nonzero coefficients in (beta_hat, vartheta_hat)."""
        return int((self.beta_hat != 0.0).sum() + (self.vartheta_hat != 0.0).sum())

    def beta_block(self, b):
        return self.beta_hat[self.spec.basis.block_slices()[b]]

    def phi(self, x, block=0):
        """Nonlinear effect of the block-th spline covariate, anchored so
        phi(0) = 0 (the loss cannot identify the level)."""
        spec_b = self.spec.basis[block]
        beta_b = self.beta_block(block)
        return eval_phi(spec_b, beta_b, x) - eval_phi(spec_b, beta_b, 0.0)

    def clinical_effect(self, clinical):
        """Combined clinical contribution (anchored splines plus linear
        clinical terms) for one row or a matrix of clinical covariates."""
        clinical = np.asarray(clinical, dtype=float)
        one = clinical.ndim == 1
        cm = np.atleast_2d(clinical)
        out = np.zeros(cm.shape[0])
        for b, c in enumerate(self.spec.nonlinear_covariates):
            out += self.phi(cm[:, c], block=b)
        for k, c in enumerate(self.spec.linear_clinical):
            out += self.vartheta_hat[k] * cm[:, c]
        return float(out[0]) if one else out

    def predict(self, clinical, features):
        """Risk score: higher predicts longer log survival.  Features are
        given on the raw scale; the training standardization is applied
        internally.  Scores are identified up to an additive constant."""
        clinical = np.asarray(clinical, dtype=float)
        features = np.asarray(features, dtype=float)
        one = clinical.ndim == 1
        cm = np.atleast_2d(clinical)
        fm = np.atleast_2d(features)
        needed = max(self.spec.nonlinear_covariates + self.spec.linear_clinical, default=-1) + 1
        if cm.shape[1] < needed:
            raise DimensionError("clinical vector length %d < %d required by model"
                                 % (cm.shape[1], needed))
        if fm.shape[1] != self.d:
            raise DimensionError("feature vector length %d != %d" % (fm.shape[1], self.d))
        z = self.standardization.apply(fm)
        scores = self.clinical_effect(cm) + z @ self.feature_coefficients()
        scores = np.atleast_1d(scores)
        return float(scores[0]) if one else scores

    def predict_dataset(self, ds: Dataset):
        return self.predict(ds.clinical, ds.features)

    # -- serialization ------------------------------------------------------

    def save(self, path):
        lines = ["plaft-model 1"]

        def put(key, value):
            lines.append("%s = %s" % (key, value))

        def put_vec(key, vec):
            put(key, ",".join(repr(float(v)) for v in np.asarray(vec, dtype=float)))

        put("d", self.d)
        put("nonlinear_covariates", ",".join(str(c) for c in self.spec.nonlinear_covariates))
        put("linear_clinical", ",".join(str(c) for c in self.spec.linear_clinical))
        for b, bs in enumerate(self.spec.basis):
            put("degree_%d" % b, bs.degree)
            put_vec("knots_%d" % b, bs.knots)
        put_vec("beta", self.beta_hat)
        put_vec("vartheta", self.vartheta_hat)
        put("gamma", repr(self.gamma))
        put_vec("lambda", self.lam_vector)
        put("penalize_all_beta", int(self.spec.penalty.penalize_all_beta))
        put("penalize_clinical", int(self.spec.penalize_clinical))
        put("standardize", int(self.spec.standardize))
        put("objective", repr(self.objective))
        put("converged", int(self.converged))
        put("iterations", self.iterations)
        put("method", self.method_used)
        put("zeta_factor", repr(self.spec.zeta_factor))
        put_vec("feature_means", self.standardization.means)
        put_vec("feature_sds", self.standardization.sds)
        put("fingerprint", self.train_fingerprint)
        put("n_train", self.n_train)
        cfg = self.spec.solver
        put("solver", "%s,%r,%r,%r,%d,%r,%d,%r,%d" % (
            cfg.method, cfg.smoothing_eps, cfg.continuation_factor, cfg.eps_floor,
            cfg.max_iterations, cfg.grad_tol, cfg.memory_pairs, cfg.smoothing_eps_scale,
            cfg.polish_sweeps))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            first = fh.readline().strip()
            if first != "plaft-model 1":
                raise ParseError("not a plaft model document: %s" % path)
            kv = {}
            for line in fh:
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                key, _, value = line.partition("=")
                kv[key.strip()] = value.strip()

        def vec(key):
            raw = kv.get(key, "")
            return (np.array([float(v) for v in raw.split(",")])
                    if raw else np.empty(0))

        nonlin = tuple(int(c) for c in kv["nonlinear_covariates"].split(",") if c != "")
        lin = tuple(int(c) for c in kv["linear_clinical"].split(",") if c != "")
        bases = []
        for b in range(len(nonlin)):
            bases.append(SplineBasisSpec(int(kv["degree_%d" % b]),
                                         tuple(vec("knots_%d" % b))))
        sv = kv["solver"].split(",")
        cfg = SolverConfig(method=sv[0],
                           smoothing_eps=None if sv[1] == "None" else float(sv[1]),
                           continuation_factor=float(sv[2]), eps_floor=float(sv[3]),
                           max_iterations=int(sv[4]), grad_tol=float(sv[5]),
                           memory_pairs=int(sv[6]), smoothing_eps_scale=float(sv[7]),
                           polish_sweeps=int(sv[8]))
        lam_vector = vec("lambda")
        spec = ModelSpec(nonlinear_covariates=nonlin,
                         basis=AdditiveBasisSpec(tuple(bases)),
                         linear_clinical=lin,
                         penalty=PenaltySpec(float(kv["gamma"]),
                                             lam_vector[len(lin):],
                                             bool(int(kv["penalize_all_beta"]))),
                         solver=cfg,
                         penalize_clinical=bool(int(kv.get("penalize_clinical", "0"))),
                         standardize=bool(int(kv["standardize"])),
                         zeta_factor=float(kv["zeta_factor"]))
        record = StandardizationRecord(vec("feature_means"), vec("feature_sds"))
        return cls(vec("beta"), vec("vartheta"), spec, float(kv["gamma"]), lam_vector,
                   float(kv["objective"]), record, bool(int(kv["converged"])),
                   int(kv["iterations"]), kv["method"], kv.get("fingerprint", ""),
                   int(kv.get("n_train", 0)))


def fit(ds: Dataset, spec: ModelSpec, theta0=None) -> FitResult:
    """Fit the partly linear AFT model by penalized rank estimation.

    Builds the pseudo L1 problem (materialized when it fits in
    solver.memory_cap_bytes, otherwise evaluated pairwise), appends the
    penalty rows scaled by 2 n^2, solves with the configured method and hard
    thresholds coefficients below ZERO_TOL to exact zeros.  Columns whose
    penalty weight exceeds the column's total absolute design mass are
    provably zero at any optimum; they are removed from the solve and
    restored as exact zeros, which keeps effectively-infinite penalties both
    exact and well conditioned.  The reported objective is the rank loss
    plus the loss-scale penalty terms, recomputed from the thresholded
    coefficients.
    """
    rspec = spec.resolve(ds)
    if rspec.standardize:
        _, record = standardize_features(ds)
        feats = record.apply(ds.features)
    else:
        record = StandardizationRecord.identity(ds.d)
        feats = ds.features
    layout = rspec.layout(ds.d)
    lam_full = rspec.lam_full(ds.d)
    raw = penalty_scale(ds.n)
    raw_pen = PenaltySpec(rspec.penalty.gamma * raw, lam_full * raw,
                          rspec.penalty.penalize_all_beta)
    cfg = rspec.solver

    X = layout.design_matrix(ds.clinical, feats)
    pen_cols, pen_weights = penalty_rows(raw_pen, layout)
    col_weight = np.zeros(layout.width)
    col_weight[pen_cols] = pen_weights
    # pair rows and the anchor row together have column mass < 4 n sum|X_ic|
    forcing_bound = 4.0 * ds.n * np.abs(X).sum(axis=0)
    keep = np.flatnonzero(~(col_weight > forcing_bound))
    keep_set = set(int(c) for c in keep)
    remap = {int(c): k for k, c in enumerate(keep)}
    kept_pen = [(remap[int(c)], w) for c, w in zip(pen_cols, pen_weights)
                if int(c) in keep_set]
    pcols = np.array([c for c, _ in kept_pen], dtype=int)
    pweights = np.array([w for _, w in kept_pen], dtype=float)
    x0 = None if theta0 is None else np.asarray(theta0, dtype=float)[keep]

    n_rows = ds.n_events * ds.n + 1 + pcols.size
    materialize = (cfg.method == "exact_l1"
                   or n_rows * keep.size * 8 <= cfg.memory_cap_bytes)
    if keep.size == 0:
        from .solver import SolveOutcome
        out = SolveOutcome(theta_hat=np.empty(0), objective=0.0, iterations=0,
                           converged=True, method_used=cfg.method)
    elif materialize:
        pp = build_pseudo_arrays(ds.log_times, ds.events, X[:, keep],
                                 zeta_factor=rspec.zeta_factor)
        problem = append_penalty_rows(pp, pcols, pweights)
        out = solve(problem, cfg, x0)
    else:
        problem = PairwiseGehanProblem(ds, zeta_factor=rspec.zeta_factor,
                                       design=X[:, keep], pen_cols=pcols,
                                       pen_weights=pweights)
        out = solve_smoothed(problem, cfg, x0)

    theta = np.zeros(layout.width)
    theta[keep] = out.theta_hat
    theta[np.abs(theta) < ZERO_TOL] = 0.0
    beta, vartheta = layout.split_theta(theta)
    loss = gehan_loss(ds, layout, beta, vartheta, features=feats)
    knot_set = (np.arange(layout.basis_width) if rspec.penalty.penalize_all_beta
                else layout.knot_columns())
    objective = (loss + rspec.penalty.gamma * float(np.abs(beta[knot_set]).sum())
                 + float(lam_full @ np.abs(vartheta)))
    return FitResult(beta, vartheta, rspec, rspec.penalty.gamma, lam_full, objective,
                     record, out.converged, out.iterations, out.method_used,
                     train_fingerprint=ds.fingerprint(), n_train=ds.n)


def fit_additive(ds: Dataset, spec: ModelSpec, theta0=None) -> FitResult:
    """Fit with two or more spline covariates (additive nonlinear part)."""
    if len(spec.nonlinear_covariates) < 2:
        raise DimensionError("fit_additive needs >= 2 nonlinear covariates")
    return fit(ds, spec, theta0)


def predict_risk(fr: FitResult, clinical, features):
    """Risk score phi_hat(x) + vartheta_hat' z for one subject."""
    return fr.predict(clinical, features)
