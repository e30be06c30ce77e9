"""Penalty selection by K-fold cross-validation and generalized CV.

Both criteria are minimized.  The CV criterion is the rank loss of the
trained coefficients evaluated on the held-out fold (pairs within the fold
only, so folds stay independent); the GCV criterion is

    loss / (1 - df/n)^2

with df the number of nonzero coefficients.  Grid values are given on a
normalized scale and multiplied by the null-model rank loss, which makes
the default grid span meaningful across outcome scales.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import FoldDegeneracyError, SaturationError
from .gehan import gehan_loss_from_residuals
from .model import FitResult, ModelSpec, fit
from .solver import SolverConfig

__all__ = [
    "TuningGrid",
    "GridPointRecord",
    "TuningReport",
    "loss_scale",
    "fold_assignment",
    "gcv_score",
    "cross_validate",
    "tune_gcv",
    "one_se_point",
    "fit_tuned",
]


def loss_scale(ds: Dataset):
    """Rank loss of the null model (all coefficients zero); used to put the
    tuning grid on the scale of the data."""
    return gehan_loss_from_residuals(ds.log_times, ds.events, np.zeros(ds.n))


@dataclass(frozen=True)
class TuningGrid:
    """Grid of (gamma, lambda) values on the normalized scale.

    Values must be strictly increasing and nonnegative; a singleton zero
    grid pins a penalty at zero (e.g. lambda for a model without feature
    selection).  `scale` multiplies every value before fitting; use
    TuningGrid.default(ds) to set it from the data.
    """

    gamma_values: tuple = (1.0,)
    lambda_values: tuple = (1.0,)
    folds: int = 5
    seed: int = 0
    scale: float = 1.0

    def __post_init__(self):
        for name, vals in (("gamma", self.gamma_values), ("lambda", self.lambda_values)):
            vals = tuple(float(v) for v in vals)
            object.__setattr__(self, name + "_values", vals)
            if not vals:
                raise ValueError("%s grid is empty" % name)
            if any(v < 0 for v in vals) or any(b <= a for a, b in zip(vals, vals[1:])):
                raise ValueError("%s grid must be nonnegative and strictly increasing" % name)
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    @classmethod
    def logspace(cls, lo=1e-3, hi=1e1, num=10):
        return tuple(np.geomspace(lo, hi, num))

    @classmethod
    def default(cls, ds: Dataset, n_gamma=10, n_lambda=10, folds=5, seed=0,
                tune_gamma=True, tune_lambda=True):
        return cls(gamma_values=cls.logspace(num=n_gamma) if tune_gamma else (0.0,),
                   lambda_values=cls.logspace(num=n_lambda) if tune_lambda else (0.0,),
                   folds=folds, seed=seed, scale=loss_scale(ds))

    def gamma_effective(self):
        return tuple(g * self.scale for g in self.gamma_values)

    def lambda_effective(self):
        return tuple(l * self.scale for l in self.lambda_values)


@dataclass(frozen=True)
class GridPointRecord:
    gamma: float          # effective (scaled) value
    lam: float
    criterion: float
    df: float
    valid: bool = True
    fold_losses: tuple = ()
    fits: tuple = ()      # FitResult per fold (CV) or the full-data fit (GCV)


@dataclass(frozen=True)
class TuningReport:
    criterion: str                     # "cv" or "gcv"
    records: tuple
    chosen: tuple                      # (gamma, lambda), effective values
    fold_ids: np.ndarray | None = None
    grid: TuningGrid | None = None

    @property
    def chosen_record(self) -> GridPointRecord:
        g, l = self.chosen
        for r in self.records:
            if r.gamma == g and r.lam == l:
                return r
        raise KeyError("chosen grid point missing from records")

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("gamma,lambda,criterion,df,valid,chosen\n")
            for r in self.records:
                fh.write("%r,%r,%r,%r,%d,%d\n"
                         % (r.gamma, r.lam, r.criterion, r.df, int(r.valid),
                            int((r.gamma, r.lam) == self.chosen)))


def fold_assignment(seed, n, events, folds):
    """Deterministic stratified fold ids in {0..folds-1}.

    Depends only on (seed, n, the event vector, folds): events and censored
    subjects are shuffled separately and dealt round-robin, keeping event
    counts balanced across folds.
    """
    events = np.asarray(events, dtype=bool)
    entropy = [int(seed) & 0xFFFFFFFF, int(n), int(folds)] + \
        [int(b) for b in np.packbits(events)]
    rng = np.random.default_rng(np.random.SeedSequence(entropy))
    ids = np.empty(n, dtype=int)
    for mask in (events, ~events):
        idx = rng.permutation(np.flatnonzero(mask))
        ids[idx] = np.arange(idx.size) % folds
    for k in range(folds):
        if int(events[ids == k].sum()) < 2:
            raise FoldDegeneracyError(
                "fold %d has fewer than 2 events; use fewer folds (n_events=%d, K=%d)"
                % (k, int(events.sum()), folds))
    return ids


def held_out_loss(fr: FitResult, fold_ds: Dataset):
    """Rank loss of trained coefficients on a held-out fold, pairing
    held-out subjects among themselves only."""
    scores = fr.predict_dataset(fold_ds)
    return gehan_loss_from_residuals(fold_ds.log_times, fold_ds.events, scores)


def gcv_score(ds: Dataset, fr: FitResult):
    """loss / (1 - df/n)^2 with df = nonzero coefficients in the fit.

    Raises SaturationError when df >= n (criterion undefined).
    """
    df = fr.df()
    if df >= ds.n:
        raise SaturationError("df=%d >= n=%d, GCV undefined" % (df, ds.n))
    loss = gehan_loss_from_residuals(ds.log_times, ds.events, fr.predict_dataset(ds))
    return loss / (1.0 - df / ds.n) ** 2


def _grid_walk(grid: TuningGrid):
    """Iteration order for warm starts: gamma ascending, lambda descending
    (the most-penalized point is solved first, from near zero)."""
    for g in grid.gamma_effective():
        for l in sorted(grid.lambda_effective(), reverse=True):
            yield g, l


def _apply_point(spec: ModelSpec, d, gamma, lam, lam_pattern, lam_fixed):
    pattern = np.ones(d) if lam_pattern is None else np.asarray(lam_pattern, dtype=float)
    fixed = np.zeros(d) if lam_fixed is None else np.asarray(lam_fixed, dtype=float)
    return spec.with_penalty(gamma=gamma, lam=lam * pattern + fixed)


def _choose(records):
    valid = [r for r in records if r.valid]
    if not valid:
        raise SaturationError("no valid grid point (all saturated)")
    best = min(valid, key=lambda r: (r.criterion, r.lam, r.gamma))
    return (best.gamma, best.lam)


def one_se_point(report: TuningReport):
    """Parsimony pick: the most-penalized grid point whose criterion is
    within one standard error of the minimum (SE from the minimizing
    point's fold losses).  Requires a CV report; report.chosen itself
    always stays the plain minimizer.
    """
    valid = [r for r in report.records if r.valid]
    best = min(valid, key=lambda r: (r.criterion, r.lam, r.gamma))
    if not best.fold_losses:
        raise ValueError("one_se_point needs fold losses (CV report)")
    k = len(best.fold_losses)
    se = float(np.std(best.fold_losses, ddof=1) / np.sqrt(k)) if k > 1 else 0.0
    ok = [r for r in valid if r.criterion <= best.criterion + se]
    pick = max(ok, key=lambda r: (r.lam, r.gamma))
    return (pick.gamma, pick.lam)


def cross_validate(ds: Dataset, spec: ModelSpec, grid: TuningGrid,
                   lam_pattern=None, lam_fixed=None) -> TuningReport:
    """K-fold CV over the penalty grid.

    Folds are stratified on event status; knots are placed once on the full
    data so every fold fits the same basis.  Successive grid points warm
    start from the previous solution within each fold.
    """
    rspec = spec.resolve(ds)
    fold_ids = fold_assignment(grid.seed, ds.n, ds.events, grid.folds)
    folds = [(ds.subset(np.flatnonzero(fold_ids != k)),
              ds.subset(np.flatnonzero(fold_ids == k))) for k in range(grid.folds)]
    warm = [None] * grid.folds
    raw_records = {}
    for g, l in _grid_walk(grid):
        pt_spec = _apply_point(rspec, ds.d, g, l, lam_pattern, lam_fixed)
        losses, fits = [], []
        for k, (train, heldout) in enumerate(folds):
            fr = fit(train, pt_spec, theta0=warm[k])
            warm[k] = np.concatenate([fr.beta_hat, fr.vartheta_hat])
            losses.append(held_out_loss(fr, heldout))
            fits.append(fr)
        raw_records[(g, l)] = GridPointRecord(
            gamma=g, lam=l, criterion=float(np.mean(losses)),
            df=float(np.mean([f.df() for f in fits])),
            fold_losses=tuple(losses), fits=tuple(fits))
    records = tuple(raw_records[(g, l)]
                    for g in grid.gamma_effective() for l in grid.lambda_effective())
    return TuningReport("cv", records, _choose(records), fold_ids, grid)


def tune_gcv(ds: Dataset, spec: ModelSpec, grid: TuningGrid,
             lam_pattern=None, lam_fixed=None) -> TuningReport:
    """GCV over the penalty grid using full-data fits with warm starts.

    Saturated points (df >= n) stay in the report flagged invalid and are
    excluded from the choice, never silently dropped.
    """
    rspec = spec.resolve(ds)
    warm = None
    raw_records = {}
    for g, l in _grid_walk(grid):
        pt_spec = _apply_point(rspec, ds.d, g, l, lam_pattern, lam_fixed)
        fr = fit(ds, pt_spec, theta0=warm)
        warm = np.concatenate([fr.beta_hat, fr.vartheta_hat])
        try:
            crit, valid = gcv_score(ds, fr), True
        except SaturationError:
            crit, valid = float("nan"), False
        raw_records[(g, l)] = GridPointRecord(gamma=g, lam=l, criterion=crit,
                                              df=float(fr.df()), valid=valid, fits=(fr,))
    records = tuple(raw_records[(g, l)]
                    for g in grid.gamma_effective() for l in grid.lambda_effective())
    return TuningReport("gcv", records, _choose(records), None, grid)


def fit_tuned(ds: Dataset, spec: ModelSpec, grid: TuningGrid, criterion="gcv",
              lam_pattern=None, lam_fixed=None, final_solver: SolverConfig = None,
              select="min"):
    """Tune (gamma, lambda) and refit the full data at the chosen point.

    select="min" takes the criterion minimizer (report.chosen);
    select="1se" takes the one-standard-error parsimony pick (CV only).
    The final fit starts cold (no warm start), so refitting with the chosen
    values reproduces it exactly.  final_solver optionally upgrades the
    solver settings for the refit (e.g. when the search used a cheaper
    budget).
    """
    tuner = {"cv": cross_validate, "gcv": tune_gcv}[criterion]
    report = tuner(ds, spec, grid, lam_pattern, lam_fixed)
    g, l = report.chosen if select == "min" else one_se_point(report)
    rspec = spec.resolve(ds)
    final_spec = _apply_point(rspec, ds.d, g, l, lam_pattern, lam_fixed)
    if final_solver is not None:
        from dataclasses import replace
        final_spec = replace(final_spec, solver=final_solver)
    return fit(ds, final_spec), report
