"""Censored survival datasets: validation, CSV ingestion, standardization.

A dataset holds, for each subject, the (possibly log-transformed) follow-up
time, the event indicator (1 = event observed, 0 = censored), a vector of
clinical covariates and a vector of high-dimensional linear features.
Datasets are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateColumnError, DegenerateDataError, DimensionError, ParseError

__all__ = [
    "CensoredObservation",
    "Dataset",
    "StandardizationRecord",
    "ColumnSchema",
    "load_csv",
    "write_csv",
    "standardize_features",
    "average_replicates",
    "stratified_split",
]


@dataclass(frozen=True)
class CensoredObservation:
    """One subject: log follow-up time, event indicator, covariates."""

    log_time: float
    event: bool
    clinical: np.ndarray
    features: np.ndarray


def _readonly(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


class Dataset:
    """Immutable container for censored observations.

    Attributes
    ----------
    log_times : (n,) float array
    events : (n,) bool array
    clinical : (n, q) float array
    features : (n, d) float array
    clinical_names, feature_names : optional tuples of column names
    """

    def __init__(self, log_times, events, clinical, features,
                 clinical_names=None, feature_names=None):
        log_times = _readonly(np.atleast_1d(log_times))
        events = np.ascontiguousarray(events, dtype=bool)
        events.flags.writeable = False
        n = log_times.shape[0]
        clinical = _readonly(np.asarray(clinical, dtype=float).reshape(n, -1))
        features = _readonly(np.asarray(features, dtype=float).reshape(n, -1))
        if events.shape != (n,):
            raise DimensionError("events length %d != %d observations" % (events.shape[0], n))
        if not np.all(np.isfinite(log_times)):
            raise ParseError("non-finite log time encountered")
        if not np.all(np.isfinite(clinical)) or not np.all(np.isfinite(features)):
            raise ParseError("non-finite covariate value encountered")
        if int(events.sum()) < 2:
            raise DegenerateDataError(
                "need at least 2 events for rank estimation, got %d" % int(events.sum()))
        self.log_times = log_times
        self.events = events
        self.clinical = clinical
        self.features = features
        self.clinical_names = tuple(clinical_names) if clinical_names else None
        self.feature_names = tuple(feature_names) if feature_names else None
        if self.clinical_names is not None and len(self.clinical_names) != self.q:
            raise DimensionError("clinical_names length != q")
        if self.feature_names is not None and len(self.feature_names) != self.d:
            raise DimensionError("feature_names length != d")

    @property
    def n(self):
        return self.log_times.shape[0]

    @property
    def q(self):
        return self.clinical.shape[1]

    @property
    def d(self):
        return self.features.shape[1]

    @property
    def n_events(self):
        return int(self.events.sum())

    @property
    def observations(self):
        return tuple(
            CensoredObservation(float(self.log_times[i]), bool(self.events[i]),
                                self.clinical[i], self.features[i])
            for i in range(self.n)
        )

    @classmethod
    def from_observations(cls, obs, clinical_names=None, feature_names=None):
        if not obs:
            raise DegenerateDataError("empty observation list")
        q = len(obs[0].clinical)
        d = len(obs[0].features)
        for k, o in enumerate(obs):
            if len(o.clinical) != q or len(o.features) != d:
                raise DimensionError("observation %d has inconsistent covariate lengths" % k)
        return cls(
            [o.log_time for o in obs],
            [o.event for o in obs],
            np.array([o.clinical for o in obs], dtype=float).reshape(len(obs), q),
            np.array([o.features for o in obs], dtype=float).reshape(len(obs), d),
            clinical_names=clinical_names,
            feature_names=feature_names,
        )

    def subset(self, idx):
        """New Dataset restricted to the given row indices (order kept)."""
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.log_times[idx], self.events[idx], self.clinical[idx],
                       self.features[idx], self.clinical_names, self.feature_names)

    def with_log_times(self, log_times):
        return Dataset(log_times, self.events, self.clinical, self.features,
                       self.clinical_names, self.feature_names)

    def with_features(self, features, feature_names=None):
        return Dataset(self.log_times, self.events, self.clinical, features,
                       self.clinical_names, feature_names or self.feature_names)

    def fingerprint(self):
        """Stable digest of the outcome columns, used to detect re-evaluation
        of a model on its own training data."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.log_times).tobytes())
        h.update(np.ascontiguousarray(self.events).tobytes())
        h.update(b"%d,%d,%d" % (self.n, self.q, self.d))
        return h.hexdigest()[:16]

    def __repr__(self):
        return "Dataset(n=%d, q=%d, d=%d, events=%d)" % (self.n, self.q, self.d, self.n_events)


@dataclass(frozen=True)
class StandardizationRecord:
    """Per-feature means and standard deviations fixed at training time."""

    means: np.ndarray
    sds: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "means", _readonly(self.means))
        object.__setattr__(self, "sds", _readonly(self.sds))
        if self.means.shape != self.sds.shape:
            raise DimensionError("means/sds length mismatch")
        if np.any(self.sds <= 0):
            raise DegenerateColumnError("standard deviations must be positive")

    @classmethod
    def identity(cls, d):
        return cls(np.zeros(d), np.ones(d))

    def apply(self, features):
        return (np.asarray(features, dtype=float) - self.means) / self.sds

    def invert(self, standardized):
        return np.asarray(standardized, dtype=float) * self.sds + self.means


def standardize_features(ds: Dataset):
    """Center and scale each feature column to mean 0, sample sd 1 (ddof=1).

    Returns the transformed dataset and the StandardizationRecord needed to
    map new raw feature vectors onto the same scale.  Clinical columns are
    left untouched.  Raises DegenerateColumnError for a constant column.
    """
    feats = ds.features
    means = feats.mean(axis=0)
    sds = feats.std(axis=0, ddof=1)
    bad = np.flatnonzero(sds <= 0)
    if bad.size:
        j = int(bad[0])
        name = ds.feature_names[j] if ds.feature_names else ("#%d" % j)
        raise DegenerateColumnError("feature column %s is constant (sd=0)" % name)
    record = StandardizationRecord(means, sds)
    return ds.with_features((feats - means) / sds), record


# ---------------------------------------------------------------------------
# CSV ingestion


@dataclass(frozen=True)
class ColumnSchema:
    """Maps CSV columns to roles.

    time_col holds follow-up times on the raw scale (log taken at load)
    unless pre_logged is set.  status_col must contain 0/1 with 1 = event.
    id_col, when given, triggers averaging of replicate feature rows that
    share an id (outcome and clinical values must agree within an id).
    """

    time_col: str
    status_col: str
    clinical_cols: tuple = ()
    feature_cols: tuple = ()
    pre_logged: bool = False
    id_col: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "clinical_cols", tuple(self.clinical_cols))
        object.__setattr__(self, "feature_cols", tuple(self.feature_cols))


def _parse_float(text, row, col):
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise ParseError("row %d: column %r has non-numeric value %r" % (row, col, text)) from None
    if math.isnan(v):
        raise ParseError("row %d: column %r is missing/NaN" % (row, col))
    return v


def load_csv(path, schema: ColumnSchema) -> Dataset:
    """Read a censored-survival CSV with a header row.

    Times must be strictly positive unless schema.pre_logged; status values
    must be 0 or 1.  Parse failures report the offending data row (1-based,
    excluding the header).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file: %s" % path) from None
        header = [h.strip() for h in header]
        col_index = {name: k for k, name in enumerate(header)}
        wanted = [schema.time_col, schema.status_col, *schema.clinical_cols, *schema.feature_cols]
        if schema.id_col:
            wanted.append(schema.id_col)
        for name in wanted:
            if name not in col_index:
                raise ParseError("column %r not found in header of %s" % (name, path))

        t_i = col_index[schema.time_col]
        s_i = col_index[schema.status_col]
        c_is = [col_index[c] for c in schema.clinical_cols]
        f_is = [col_index[c] for c in schema.feature_cols]
        id_i = col_index[schema.id_col] if schema.id_col else None

        log_times, events, clinical, features, ids = [], [], [], [], []
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError("row %d: expected %d fields, got %d"
                                 % (row_no, len(header), len(row)))
            t = _parse_float(row[t_i], row_no, schema.time_col)
            if schema.pre_logged:
                log_times.append(t)
            else:
                if t <= 0:
                    raise ParseError("row %d: time must be > 0, got %r"
                                     % (row_no, row[t_i]))
                log_times.append(math.log(t))
            s = _parse_float(row[s_i], row_no, schema.status_col)
            if s not in (0.0, 1.0):
                raise ParseError("row %d: status must be 0 or 1, got %r" % (row_no, row[s_i]))
            events.append(bool(s))
            clinical.append([_parse_float(row[k], row_no, header[k]) for k in c_is])
            features.append([_parse_float(row[k], row_no, header[k]) for k in f_is])
            if id_i is not None:
                ids.append(row[id_i].strip())

    if not log_times:
        raise ParseError("no data rows in %s" % path)
    n = len(log_times)
    log_times = np.array(log_times)
    events = np.array(events, dtype=bool)
    clinical = np.array(clinical, dtype=float).reshape(n, len(c_is))
    features = np.array(features, dtype=float).reshape(n, len(f_is))
    if schema.id_col:
        log_times, events, clinical, features = average_replicates(
            log_times, events, clinical, features, ids)
    return Dataset(log_times, events, clinical, features,
                   clinical_names=schema.clinical_cols or None,
                   feature_names=schema.feature_cols or None)


def write_csv(ds: Dataset, path):
    """Write a dataset so that reloading reproduces it bitwise.

    The time column is emitted as the stored log time (load with
    pre_logged=True); floats use repr, which round-trips exactly.
    """
    c_names = list(ds.clinical_names or ("x%d" % j for j in range(ds.q)))
    f_names = list(ds.feature_names or ("z%d" % j for j in range(ds.d)))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["log_time", "status", *c_names, *f_names])
        for i in range(ds.n):
            writer.writerow([repr(float(ds.log_times[i])), int(ds.events[i]),
                             *[repr(float(v)) for v in ds.clinical[i]],
                             *[repr(float(v)) for v in ds.features[i]]])
    return ColumnSchema("log_time", "status", tuple(c_names), tuple(f_names), pre_logged=True)


def average_replicates(log_times, events, clinical, features, ids):
    """Average feature rows sharing a subject id; outcome and clinical values
    must be identical within an id.  First-occurrence order is preserved.
    Averaging happens before standardization, so replicate counts may differ
    across subjects without distorting the feature scale.
    """
    order = {}
    for k, s in enumerate(ids):
        order.setdefault(s, []).append(k)
    lt, ev, cl, ft = [], [], [], []
    for s, rows in order.items():
        r0 = rows[0]
        for r in rows[1:]:
            if log_times[r] != log_times[r0] or events[r] != events[r0] \
                    or not np.array_equal(clinical[r], clinical[r0]):
                raise ParseError("subject id %r has conflicting outcome/clinical rows" % s)
        lt.append(log_times[r0])
        ev.append(events[r0])
        cl.append(clinical[r0])
        ft.append(np.mean(features[rows], axis=0))
    return (np.array(lt), np.array(ev, dtype=bool),
            np.array(cl, dtype=float).reshape(len(lt), clinical.shape[1]),
            np.array(ft, dtype=float).reshape(len(lt), features.shape[1]))


def stratified_split(ds: Dataset, train_fraction, rng):
    """Random train/validation split stratified on event status.

    Returns (train_idx, valid_idx) as index arrays.  Stratification keeps the
    censoring rates of the two parts close even under heavy censoring.
    """
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must be in (0, 1)")
    train, valid = [], []
    for mask in (ds.events, ~ds.events):
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            continue
        idx = rng.permutation(idx)
        k = int(round(train_fraction * idx.size))
        k = min(max(k, 1), idx.size - 1) if idx.size > 1 else k
        train.extend(idx[:k])
        valid.extend(idx[k:])
    return np.sort(np.array(train, dtype=int)), np.sort(np.array(valid, dtype=int))
