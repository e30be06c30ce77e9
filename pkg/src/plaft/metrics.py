"""Prediction and selection metrics for censored outcomes.

The concordance statistic follows the usual convention for censored data: a
pair is comparable when the smaller observed time belongs to a subject with
an observed event (for tied times, when exactly one of the two had an
event); the pair is concordant when that shorter-surviving subject has the
lower risk score, with score ties counting 1/2.  Scores predict log
survival, so higher score means better prognosis.

MSPE and the selection rates require the generating truth and are therefore
only available for simulated data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, stratified_split
from .errors import DimensionError
from .model import ZERO_TOL, FitResult, fit

__all__ = [
    "MetricsReport",
    "Truth",
    "c_statistic",
    "mspe",
    "mspe_for_fit",
    "selection_rates",
    "sse",
    "evaluate_fit",
    "repeated_split_c",
]


@dataclass(frozen=True)
class Truth:
    """Generating truth for simulated data: linear coefficients and the
    clinical effect function (vectorized over rows of the clinical matrix,
    anchored internally so phi(0) = 0)."""

    vartheta: np.ndarray
    phi: object  # callable: (n, q) clinical matrix -> (n,) effect

    def phi_anchored(self, clinical):
        clinical = np.atleast_2d(np.asarray(clinical, dtype=float))
        zero = np.zeros((1, clinical.shape[1]))
        return np.asarray(self.phi(clinical), dtype=float) - float(self.phi(zero)[0])


@dataclass(frozen=True)
class MetricsReport:
    c_statistic: float | None = None
    comparable_pairs: int = 0
    mspe1: float | None = None
    mspe2: float | None = None
    sse: float | None = None
    p_c: float | None = None
    p_i: float | None = None
    notes: tuple = field(default=())

    def as_dict(self):
        return {"c_statistic": self.c_statistic, "comparable_pairs": self.comparable_pairs,
                "mspe1": self.mspe1, "mspe2": self.mspe2, "sse": self.sse,
                "p_c": self.p_c, "p_i": self.p_i}

    def summary(self):
        parts = []
        for key, val in self.as_dict().items():
            if val is None:
                continue
            parts.append("%s=%.6g" % (key, val))
        if self.notes:
            parts.append("notes: " + "; ".join(self.notes))
        return "  ".join(parts)


def c_statistic(times, events, scores):
    """Censored-data concordance.

    Returns (c, comparable_pairs); c is None when no pair is comparable.
    c is invariant under strictly increasing transformations of the scores.
    """
    t = np.asarray(times, dtype=float)
    e = np.asarray(events, dtype=bool)
    s = np.asarray(scores, dtype=float)
    if not (t.shape == e.shape == s.shape) or t.ndim != 1 or t.size < 2:
        raise DimensionError("times, events, scores must be equal-length vectors (n >= 2)")
    ti, tj = t[:, None], t[None, :]
    si, sj = s[:, None], s[None, :]
    # pair counted once at the index holding the shorter (or event) subject
    shorter = (ti < tj) & e[:, None]
    tied_time = (ti == tj) & e[:, None] & ~e[None, :]
    comparable = shorter | tied_time
    n_comp = int(comparable.sum())
    if n_comp == 0:
        return None, 0
    concordant = float((comparable & (si < sj)).sum()) + 0.5 * float(
        (comparable & (si == sj)).sum())
    return concordant / n_comp, n_comp


def mspe(phi_hat_values, phi_true_values, vartheta_hat, vartheta_true, features):
    """Mean squared prediction errors over a test sample.

    mspe1 includes the nonlinear-effect error, mspe2 only the linear part:

        mspe1 = mean[(phi_hat - phi_true + (vt_hat - vt_true)'z)^2]
        mspe2 = mean[((vt_hat - vt_true)'z)^2]

    Both phi value vectors must share the phi(0)=0 anchoring; vartheta_hat
    must be on the raw feature scale.
    """
    dphi = np.asarray(phi_hat_values, dtype=float) - np.asarray(phi_true_values, dtype=float)
    dz = np.asarray(features, dtype=float) @ (np.asarray(vartheta_hat, dtype=float)
                                              - np.asarray(vartheta_true, dtype=float))
    if dphi.shape != dz.shape:
        raise DimensionError("phi values and feature rows disagree in length")
    return float(np.mean((dphi + dz) ** 2)), float(np.mean(dz ** 2))


def mspe_for_fit(fr: FitResult, truth: Truth, test: Dataset):
    phi_hat = fr.clinical_effect(test.clinical)
    phi_true = truth.phi_anchored(test.clinical)
    return mspe(phi_hat, phi_true, fr.feature_coefficients(raw=True),
                truth.vartheta, test.features)


def selection_rates(vartheta_hat, vartheta_true, zero_tol=ZERO_TOL):
    """(p_c, p_i): fraction of true zeros estimated zero, and of true
    nonzeros estimated zero.  A rate is None when its denominator is empty.
    """
    hat = np.abs(np.asarray(vartheta_hat, dtype=float)) < zero_tol
    true_zero = np.asarray(vartheta_true, dtype=float) == 0.0
    if hat.shape != true_zero.shape:
        raise DimensionError("coefficient vectors differ in length")
    n_zero = int(true_zero.sum())
    n_nonzero = int((~true_zero).sum())
    p_c = float((hat & true_zero).sum()) / n_zero if n_zero else None
    p_i = float((hat & ~true_zero).sum()) / n_nonzero if n_nonzero else None
    return p_c, p_i


def sse(vartheta_hat, vartheta_true):
    """Sum of squared coefficient errors (vt_hat - vt)'(vt_hat - vt)."""
    diff = np.asarray(vartheta_hat, dtype=float) - np.asarray(vartheta_true, dtype=float)
    if diff.ndim != 1:
        raise DimensionError("coefficient vectors must be 1-dimensional")
    return float(diff @ diff)


def evaluate_fit(fr: FitResult, ds: Dataset, truth: Truth = None) -> MetricsReport:
    """All computable metrics of a fitted model on a dataset.

    Truth-dependent metrics (mspe, sse, selection rates) are filled only
    when the generating truth is supplied.  A note flags evaluation on the
    model's own training data (optimistic c).
    """
    scores = fr.predict_dataset(ds)
    c, n_comp = c_statistic(ds.log_times, ds.events, scores)
    notes = []
    if fr.train_fingerprint and fr.train_fingerprint == ds.fingerprint():
        notes.append("evaluated on training data: c is optimistic")
    kw = {}
    if truth is not None:
        m1, m2 = mspe_for_fit(fr, truth, ds)
        p_c, p_i = selection_rates(fr.feature_coefficients(raw=True), truth.vartheta)
        kw = {"mspe1": m1, "mspe2": m2, "p_c": p_c, "p_i": p_i,
              "sse": sse(fr.feature_coefficients(raw=True), truth.vartheta)}
    return MetricsReport(c_statistic=c, comparable_pairs=n_comp, notes=tuple(notes), **kw)


def repeated_split_c(ds: Dataset, fr: FitResult, repeats, train_fraction=0.6, seed=0):
    """Internal validation: repeated stratified train/validation splits.

    Each repeat refits the model's specification (fixed penalties) on the
    training part and computes c on the validation part.  Repeats with no
    comparable validation pair are excluded from the mean and counted.
    Returns (mean_c, c_values, n_undefined).
    """
    from .errors import DegenerateDataError

    cs = []
    undefined = 0
    for rep in range(repeats):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, rep]))
        train_idx, valid_idx = stratified_split(ds, train_fraction, rng)
        try:
            train, valid = ds.subset(train_idx), ds.subset(valid_idx)
            refit = fit(train, fr.spec)
            c, _ = c_statistic(valid.log_times, valid.events, refit.predict_dataset(valid))
        except (DegenerateDataError, DimensionError):
            c = None
        if c is None:
            undefined += 1
        else:
            cs.append(c)
    mean_c = float(np.mean(cs)) if cs else None
    return mean_c, cs, undefined
