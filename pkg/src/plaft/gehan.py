"""Gehan rank loss and its reformulation as an L1 regression.

For residuals e_i = t_i - theta' x_i (t = log time, x = stacked design row)
the loss is

    L_n(theta) = n^-2 sum_i sum_j delta_i * max(0, e_j - e_i),

convex and piecewise linear.  Its minimizer is also the minimizer of an
ordinary L1 regression over pseudo-data: one row per (event i, subject j)
pair with response delta_i(t_i - t_j) and design delta_i(x_i - x_j), plus a
single anchor row with a large response zeta and design
G = sum_k sum_l delta_k (x_l - x_k).  The anchor row linearizes the
difference between max(0, -u) and |u|; any minimizer keeps its residual
positive, so the two objectives differ by a constant factor and shift.

L1 penalties are added by appending one zero-response row per penalized
coefficient whose design has a single nonzero entry (the penalty weight), so
the augmented L1 objective equals the un-augmented one plus the weighted L1
norms exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset
from .errors import DegenerateDataError, DimensionError, StateError
from .splines import AdditiveBasisSpec, eval_basis

__all__ = [
    "DesignRow",
    "DesignLayout",
    "PenaltySpec",
    "PseudoProblem",
    "gehan_loss",
    "gehan_loss_from_residuals",
    "anchor_design",
    "build_pseudo_arrays",
    "build_pseudo_problem",
    "penalty_rows",
    "append_penalty_rows",
    "augment_penalties",
    "PairwiseGehanProblem",
]

DEFAULT_ZETA_FACTOR = 1e6
# Materialize pseudo rows only below this many bytes; larger problems use the
# pairwise evaluator which never forms the S x (M+d) matrix.
DEFAULT_MEMORY_CAP = 2 << 30


@dataclass(frozen=True)
class DesignRow:
    """One subject's stacked design row: spline basis part then linear part."""

    basis_part: np.ndarray
    linear_part: np.ndarray

    def stacked(self):
        return np.concatenate([self.basis_part, self.linear_part])


@dataclass(frozen=True)
class DesignLayout:
    """Column layout of the stacked design matrix.

    Columns run: spline basis blocks for each nonlinear clinical covariate
    (in the order of nonlinear_covariates), then clinical covariates modeled
    linearly, then the d features.  The linear block (clinical-linear +
    features) is the vartheta vector.
    """

    bases: AdditiveBasisSpec
    nonlinear_covariates: tuple
    linear_clinical: tuple
    n_features: int

    def __post_init__(self):
        object.__setattr__(self, "nonlinear_covariates", tuple(self.nonlinear_covariates))
        object.__setattr__(self, "linear_clinical", tuple(self.linear_clinical))
        if len(self.bases) != len(self.nonlinear_covariates):
            raise DimensionError("one basis spec per nonlinear covariate required")
        overlap = set(self.nonlinear_covariates) & set(self.linear_clinical)
        if overlap:
            raise DimensionError("clinical indices %s are both nonlinear and linear" % overlap)

    @property
    def basis_width(self):
        return self.bases.total_M

    @property
    def n_linear(self):
        return len(self.linear_clinical) + self.n_features

    @property
    def width(self):
        return self.basis_width + self.n_linear

    def knot_columns(self):
        return self.bases.knot_columns()

    def polynomial_columns(self):
        all_beta = np.arange(self.basis_width)
        return np.setdiff1d(all_beta, self.knot_columns())

    def linear_columns(self):
        return np.arange(self.basis_width, self.width)

    def feature_columns(self):
        return np.arange(self.basis_width + len(self.linear_clinical), self.width)

    def design_row(self, clinical_i, features_i) -> DesignRow:
        parts = [eval_basis(spec, clinical_i[c])
                 for spec, c in zip(self.bases, self.nonlinear_covariates)]
        basis_part = np.concatenate(parts) if parts else np.empty(0)
        lin = np.concatenate([np.asarray(clinical_i, dtype=float)[list(self.linear_clinical)],
                              np.asarray(features_i, dtype=float)])
        return DesignRow(basis_part, lin)

    def design_matrix(self, clinical, features):
        clinical = np.asarray(clinical, dtype=float)
        features = np.asarray(features, dtype=float)
        n = clinical.shape[0]
        blocks = [eval_basis(spec, clinical[:, c])
                  for spec, c in zip(self.bases, self.nonlinear_covariates)]
        if self.linear_clinical:
            blocks.append(clinical[:, list(self.linear_clinical)])
        blocks.append(features)
        return np.hstack([b.reshape(n, -1) for b in blocks])

    def split_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.width,):
            raise DimensionError("theta length %d != layout width %d" % (theta.size, self.width))
        return theta[: self.basis_width], theta[self.basis_width:]


@dataclass(frozen=True)
class PenaltySpec:
    """L1 penalty weights: gamma on spline knot coefficients, lam on the
    linear block (scalar, or one weight per linear coefficient).  With
    penalize_all_beta the gamma penalty covers every spline coefficient, not
    just the knot ones."""

    gamma: float = 0.0
    lam: object = 0.0
    penalize_all_beta: bool = False

    def __post_init__(self):
        if not np.isfinite(self.gamma) or self.gamma < 0:
            raise ValueError("gamma must be finite and >= 0")
        lam = np.asarray(self.lam, dtype=float)
        if not np.all(np.isfinite(lam)) or np.any(lam < 0):
            raise ValueError("lambda weights must be finite and >= 0")

    def lam_vector(self, n_linear):
        lam = np.asarray(self.lam, dtype=float)
        if lam.ndim == 0:
            return np.full(n_linear, float(lam))
        if lam.shape != (n_linear,):
            raise DimensionError("lambda vector length %d != linear block width %d"
                                 % (lam.size, n_linear))
        return lam.copy()

    def scaled(self, factor):
        return PenaltySpec(self.gamma * factor,
                           np.asarray(self.lam, dtype=float) * factor,
                           self.penalize_all_beta)


@dataclass(frozen=True)
class PseudoProblem:
    """L1 regression pair (V, W) encoding the rank loss.

    Row order: for each event i (ascending) all pairs (i, j) with j
    ascending, then the zeta anchor row, then any penalty rows.  Before
    augmentation S = n_events * n + 1.
    """

    V: np.ndarray
    W: np.ndarray
    zeta: float
    n: int
    event_indices: tuple
    zeta_row: int
    penalty_rows: int = 0

    @property
    def S(self):
        return self.V.shape[0]

    @property
    def n_events(self):
        return len(self.event_indices)

    def pair_indices(self):
        """(i, j) subject indices of each pair row, in row order."""
        ev = np.asarray(self.event_indices, dtype=int)
        return np.repeat(ev, self.n), np.tile(np.arange(self.n), len(ev))

    def l1_objective(self, theta):
        return float(np.abs(self.V - self.W @ np.asarray(theta, dtype=float)).sum())


def gehan_loss_from_residuals(log_times, events, fitted):
    """Gehan loss n^-2 sum_{i: event} sum_j max(0, e_j - e_i) from fitted
    values (residual e = log_time - fitted)."""
    log_times = np.asarray(log_times, dtype=float)
    events = np.asarray(events, dtype=bool)
    fitted = np.asarray(fitted, dtype=float)
    if fitted.shape != log_times.shape:
        raise DimensionError("fitted values length %d != %d observations"
                             % (fitted.size, log_times.size))
    e = log_times - fitted
    n = e.shape[0]
    diff = e[None, :] - e[events, None]
    return float(np.maximum(diff, 0.0).sum()) / (n * n)


def gehan_loss(ds: Dataset, layout: DesignLayout, beta, vartheta, features=None):
    """Gehan loss of the model with spline coefficients beta and linear
    coefficients vartheta.  `features` overrides ds.features (e.g. to pass
    standardized values)."""
    beta = np.asarray(beta, dtype=float)
    vartheta = np.asarray(vartheta, dtype=float)
    if beta.shape != (layout.basis_width,):
        raise DimensionError("beta length %d != basis width %d"
                             % (beta.size, layout.basis_width))
    if vartheta.shape != (layout.n_linear,):
        raise DimensionError("vartheta length %d != linear width %d"
                             % (vartheta.size, layout.n_linear))
    X = layout.design_matrix(ds.clinical, ds.features if features is None else features)
    theta = np.concatenate([beta, vartheta])
    return gehan_loss_from_residuals(ds.log_times, ds.events, X @ theta)


def _pair_arrays(log_times, events, X):
    ev = np.flatnonzero(events)
    n = log_times.shape[0]
    V = np.repeat(log_times[ev], n) - np.tile(log_times, ev.size)
    W = np.repeat(X[ev], n, axis=0) - np.tile(X, (ev.size, 1))
    return ev, V, W


def anchor_design(events, X):
    """Design vector of the zeta anchor row:
    G = sum_k sum_l delta_k (x_l - x_k)."""
    events = np.asarray(events, dtype=bool)
    n_ev = int(events.sum())
    return n_ev * X.sum(axis=0) - X.shape[0] * X[events].sum(axis=0)


def build_pseudo_arrays(log_times, events, X, zeta_factor=DEFAULT_ZETA_FACTOR) -> PseudoProblem:
    """Layout-free core of build_pseudo_problem: pseudo rows for an explicit
    design matrix."""
    log_times = np.asarray(log_times, dtype=float)
    events = np.asarray(events, dtype=bool)
    if int(events.sum()) < 2:
        raise DegenerateDataError("need at least 2 events, got %d" % int(events.sum()))
    ev, V_pairs, W_pairs = _pair_arrays(log_times, events, np.asarray(X, dtype=float))
    zeta = zeta_factor * float(np.abs(V_pairs).sum())
    G = anchor_design(events, X)
    V = np.concatenate([V_pairs, [zeta]])
    W = np.vstack([W_pairs, G])
    return PseudoProblem(V=V, W=W, zeta=zeta, n=log_times.shape[0],
                         event_indices=tuple(int(i) for i in ev), zeta_row=V.shape[0] - 1)


def build_pseudo_problem(ds: Dataset, layout: DesignLayout, features=None,
                         zeta_factor=DEFAULT_ZETA_FACTOR) -> PseudoProblem:
    """Materialize the pseudo response V and design W for the rank loss.

    zeta is set to zeta_factor times the total absolute pseudo response,
    which keeps the anchor-row residual positive (and the reformulation
    exact) for any coefficient vector the optimizer can reach, and scales
    with the data.
    """
    X = layout.design_matrix(ds.clinical, ds.features if features is None else features)
    return build_pseudo_arrays(ds.log_times, ds.events, X, zeta_factor)


def penalty_rows(pen: PenaltySpec, layout: DesignLayout):
    """(columns, weights) of the augmentation rows, one per penalized
    coefficient: spline coefficients first (knot-only unless
    penalize_all_beta), then every linear coefficient."""
    beta_cols = (np.arange(layout.basis_width) if pen.penalize_all_beta
                 else layout.knot_columns())
    lin_cols = layout.linear_columns()
    cols = np.concatenate([beta_cols, lin_cols]).astype(int)
    weights = np.concatenate([np.full(beta_cols.size, pen.gamma),
                              pen.lam_vector(layout.n_linear)])
    return cols, weights


def append_penalty_rows(pp: PseudoProblem, cols, weights) -> PseudoProblem:
    """Layout-free core of augment_penalties: one zero-response row per
    (column, weight) pair."""
    if pp.penalty_rows:
        raise StateError("pseudo-problem already carries penalty rows")
    cols = np.asarray(cols, dtype=int)
    weights = np.asarray(weights, dtype=float)
    P = np.zeros((cols.size, pp.W.shape[1]))
    P[np.arange(cols.size), cols] = weights
    return replace(pp,
                   V=np.concatenate([pp.V, np.zeros(cols.size)]),
                   W=np.vstack([pp.W, P]),
                   penalty_rows=int(cols.size))


def augment_penalties(pp: PseudoProblem, pen: PenaltySpec, layout: DesignLayout) -> PseudoProblem:
    """Append one zero-response row per penalized coefficient.

    Each appended row has a single nonzero design entry (gamma for a spline
    coefficient, lam_j for a linear one), so for any theta the augmented L1
    objective equals the un-augmented objective plus the weighted L1
    penalty, term by term.
    """
    if pp.W.shape[1] != layout.width:
        raise DimensionError("layout width %d != problem width %d"
                             % (layout.width, pp.W.shape[1]))
    cols, weights = penalty_rows(pen, layout)
    return append_penalty_rows(pp, cols, weights)


class PairwiseGehanProblem:
    """Smoothed-objective evaluator that never materializes the pair rows.

    Implements the same interface as the array-backed problem used by the
    smoothed solver (value_and_grad / exact_shifted / exact_literal), with
    identical values: pair terms are accumulated in chunks over events, the
    zeta anchor row enters through a numerically stable shifted form, and
    penalty rows are applied analytically.
    """

    def __init__(self, ds: Dataset, layout: DesignLayout = None, pen: PenaltySpec = None,
                 features=None, zeta_factor=DEFAULT_ZETA_FACTOR, chunk_rows=2_000_000,
                 design=None, pen_cols=None, pen_weights=None):
        if ds.n_events < 2:
            raise DegenerateDataError("need at least 2 events, got %d" % ds.n_events)
        self.t = np.asarray(ds.log_times, dtype=float)
        self.events = np.asarray(ds.events, dtype=bool)
        self.ev = np.flatnonzero(self.events)
        if design is not None:
            self.X = np.asarray(design, dtype=float)
        else:
            self.X = layout.design_matrix(ds.clinical,
                                          ds.features if features is None else features)
        self.n = ds.n
        t_diffs = np.abs(self.t[self.ev, None] - self.t[None, :]).ravel()
        self.zeta = zeta_factor * float(t_diffs.sum())
        self.G = anchor_design(self.events, self.X)
        if pen_cols is not None:
            self.pen_cols = np.asarray(pen_cols, dtype=int)
            self.pen_weights = np.asarray(pen_weights, dtype=float)
        else:
            self.pen_cols, self.pen_weights = penalty_rows(pen or PenaltySpec(), layout)
        self.n_params = self.X.shape[1]
        self.n_terms = self.ev.size * self.n + 1 + self.pen_cols.size
        self._chunk = max(1, chunk_rows // max(self.n, 1))
        all_v = np.concatenate([t_diffs, [self.zeta], np.zeros(self.pen_cols.size)])
        self.v_scale = float(np.median(all_v))
        if self.v_scale == 0.0:
            self.v_scale = float(np.mean(all_v)) or 1.0

    def value_and_grad(self, theta, eps):
        theta = np.asarray(theta, dtype=float)
        e = self.t - self.X @ theta
        value = 0.0
        grad = np.zeros_like(theta)
        for lo in range(0, self.ev.size, self._chunk):
            ev = self.ev[lo:lo + self._chunk]
            u = e[ev, None] - e[None, :]
            s = np.hypot(u, eps)
            value += float(s.sum()) - eps * u.size
            psi = u / s
            grad -= psi.sum(axis=1) @ self.X[ev] - psi.sum(axis=0) @ self.X
        value += self._anchor_value(theta, eps)
        big = self.zeta - float(theta @ self.G)
        grad -= self.G * (big / np.hypot(big, eps))
        if self.pen_cols.size:
            pu = self.pen_weights * theta[self.pen_cols]
            ps = np.hypot(pu, eps)
            value += float(ps.sum()) - eps * pu.size
            np.add.at(grad, self.pen_cols, self.pen_weights * pu / ps)
        return value, grad

    def _anchor_value(self, theta, eps):
        # smoothed |zeta - theta'G| minus the constant zeta, computed without
        # cancellation: sqrt(b^2+eps^2) - b = eps^2 / (sqrt(b^2+eps^2) + b)
        r = float(theta @ self.G)
        big = self.zeta - r
        if big <= 0:  # outside the anchor's valid region; fall back
            return float(np.hypot(big, eps) - eps - self.zeta)
        return -r + eps * eps / (np.hypot(big, eps) + big) - eps

    def exact_shifted(self, theta):
        """sum_s |V_s - theta'W_s| minus the constant zeta, full precision."""
        theta = np.asarray(theta, dtype=float)
        e = self.t - self.X @ theta
        value = 0.0
        for lo in range(0, self.ev.size, self._chunk):
            ev = self.ev[lo:lo + self._chunk]
            value += float(np.abs(e[ev, None] - e[None, :]).sum())
        r = float(theta @ self.G)
        value += -r if self.zeta - r >= 0 else abs(self.zeta - r) - self.zeta
        value += float(np.abs(self.pen_weights * theta[self.pen_cols]).sum())
        return value

    def exact_literal(self, theta):
        return self.exact_shifted(theta) + self.zeta

    def residual(self, theta):
        """Full residual vector V - W theta in pseudo-row order (pairs,
        anchor, penalties) without forming W."""
        theta = np.asarray(theta, dtype=float)
        e = self.t - self.X @ theta
        parts = [(e[self.ev, None] - e[None, :]).ravel(),
                 [self.zeta - float(theta @ self.G)],
                 -self.pen_weights * theta[self.pen_cols]]
        return np.concatenate(parts)

    def column(self, c):
        """Column c of the pseudo design in row order, built on demand."""
        col_pairs = (self.X[self.ev, c][:, None] - self.X[:, c][None, :]).ravel()
        pen = np.zeros(self.pen_cols.size)
        pen[self.pen_cols == c] = self.pen_weights[self.pen_cols == c]
        return np.concatenate([col_pairs, [self.G[c]], pen])
