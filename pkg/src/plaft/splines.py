"""Truncated power spline bases for nonlinear covariate effects.

The basis of degree p with knots k_1 < ... < k_r is

    B(x) = (x, x^2, ..., x^p, (x-k_1)_+^p, ..., (x-k_r)_+^p)

with no intercept column, so the basis has M = p + r functions.  Knot
coefficients (the last r entries) control jumps in the p-th derivative;
putting an L1 penalty on them performs knot selection.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, KnotDegeneracyError

__all__ = ["SplineBasisSpec", "AdditiveBasisSpec", "place_knots", "eval_basis", "eval_phi"]

DEFAULT_DEGREE = 3


@dataclass(frozen=True)
class SplineBasisSpec:
    """Degree and knot vector of one truncated power basis."""

    degree: int
    knots: tuple

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        knots = tuple(float(k) for k in self.knots)
        if any(not np.isfinite(k) for k in knots):
            raise ValueError("knots must be finite")
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise ValueError("knots must be strictly increasing")
        object.__setattr__(self, "knots", knots)

    @property
    def r(self):
        return len(self.knots)

    @property
    def M(self):
        return self.degree + len(self.knots)


@dataclass(frozen=True)
class AdditiveBasisSpec:
    """One SplineBasisSpec per nonlinear covariate, in covariate order."""

    specs: tuple

    def __post_init__(self):
        object.__setattr__(self, "specs", tuple(self.specs))
        for s in self.specs:
            if not isinstance(s, SplineBasisSpec):
                raise TypeError("AdditiveBasisSpec expects SplineBasisSpec entries")

    def __len__(self):
        return len(self.specs)

    def __iter__(self):
        return iter(self.specs)

    def __getitem__(self, j):
        return self.specs[j]

    @property
    def total_M(self):
        return sum(s.M for s in self.specs)

    def block_slices(self):
        """Column slice of each covariate's coefficients within the stacked
        basis vector."""
        out, at = [], 0
        for s in self.specs:
            out.append(slice(at, at + s.M))
            at += s.M
        return out

    def knot_columns(self):
        """Indices of knot coefficients in the stacked basis vector."""
        cols, at = [], 0
        for s in self.specs:
            cols.extend(range(at + s.degree, at + s.M))
            at += s.M
        return np.array(cols, dtype=int)


def place_knots(values, r):
    """Knots at the r sample quantiles with equally spaced levels k/(r+1).

    Quantiles use linear interpolation between order statistics.  Ties coming
    from discrete data are collapsed with a warning and a shorter knot vector
    is returned; if no knot survives, a KnotDegeneracyError reports the
    achievable count.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    values = np.asarray(values, dtype=float).ravel()
    distinct = np.unique(values)
    if distinct.size < r + 2:
        raise KnotDegeneracyError(
            "need at least r+2=%d distinct values for r=%d knots, have %d"
            % (r + 2, r, distinct.size),
            achievable=max(int(distinct.size) - 2, 0))
    levels = np.arange(1, r + 1) / (r + 1)
    qs = np.quantile(values, levels, method="linear")
    knots = np.unique(qs)
    if knots.size < r:
        if knots.size == 0:
            raise KnotDegeneracyError("all candidate knots coincide", achievable=0)
        warnings.warn("collapsed %d tied knots; using r=%d" % (r - knots.size, knots.size),
                      stacklevel=2)
    return knots


def eval_basis(spec: SplineBasisSpec, x):
    """Evaluate the basis at x (scalar -> (M,), array (n,) -> (n, M))."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    xv = np.atleast_1d(x)
    cols = [xv ** m for m in range(1, spec.degree + 1)]
    for k in spec.knots:
        cols.append(np.maximum(xv - k, 0.0) ** spec.degree)
    out = np.stack(cols, axis=-1)
    return out[0] if scalar else out


def eval_phi(spec: SplineBasisSpec, beta, x):
    """Spline value B(x)'beta; beta must have length M."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (spec.M,):
        raise DimensionError("beta has length %d, basis needs %d" % (beta.size, spec.M))
    return eval_basis(spec, x) @ beta
