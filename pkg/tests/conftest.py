"""Shared fixtures and independent oracles used across the test suite."""

import numpy as np
import pytest

from plaft.data import Dataset
from plaft.gehan import DesignLayout
from plaft.splines import AdditiveBasisSpec, SplineBasisSpec, place_knots


def make_censored_dataset(rng, n, d=1, q=1, theta=None, censor_width=1.0,
                          clinical_range=2.0):
    """Random dataset with a linear truth; regenerates until >= 2 events."""
    for _ in range(50):
        Z = rng.normal(size=(n, d))
        X = rng.uniform(-clinical_range, clinical_range, size=(n, q))
        vt = np.ones(d) if theta is None else np.asarray(theta, dtype=float)
        T = X[:, 0] + Z @ vt + 0.5 * rng.normal(size=n)
        C = T + rng.uniform(0.0, censor_width, size=n) - 0.3 * censor_width
        obs = np.minimum(T, C)
        events = T <= C
        if events.sum() >= 2:
            return Dataset(obs, events, X, Z)
    raise AssertionError("could not draw a dataset with 2 events")


def naive_gehan_loss(log_times, events, fitted):
    """Reference double-loop Gehan loss (the O(n^2) oracle)."""
    e = np.asarray(log_times, float) - np.asarray(fitted, float)
    n = e.size
    total = 0.0
    for i in range(n):
        if not events[i]:
            continue
        for j in range(n):
            total += max(0.0, e[j] - e[i])
    return total / (n * n)


def linear_layout(q_linear, d):
    """Design layout with no splines: clinical linear + features."""
    return DesignLayout(AdditiveBasisSpec(()), (), tuple(range(q_linear)), d)


def spline_layout(ds, n_knots=3, degree=3):
    spec = SplineBasisSpec(degree, tuple(place_knots(ds.clinical[:, 0], n_knots)))
    return DesignLayout(AdditiveBasisSpec((spec,)), (0,), tuple(range(1, ds.q)), ds.d)


def batch_gehan_loss(log_times, events, X, thetas):
    """Vectorized Gehan loss over a batch of coefficient vectors (G, k)."""
    t = np.asarray(log_times, float)
    ev = np.flatnonzero(events)
    E = t[None, :] - thetas @ X.T               # (G, n) residuals
    diff = E[:, None, :] - E[:, ev][:, :, None]  # e_j - e_i for events i
    return np.maximum(diff, 0.0).sum(axis=(1, 2)) / (t.size ** 2)


def grid_argmin_gehan(log_times, events, X, lo=-5.0, hi=5.0, final_step=2.5e-4):
    """Multistage grid search for the Gehan-loss minimizer.

    Convexity makes zooming sound as long as the incumbent stays interior;
    whenever a stage's argmin lands within two cells of its window edge the
    window is doubled and the stage rerun.  The last stage has resolution
    final_step.
    """
    k = X.shape[1]
    center = np.full(k, 0.5 * (lo + hi))
    half = np.full(k, 0.5 * (hi - lo))
    steps = [2e-2, 2e-3, final_step]
    for step in steps:
        for _ in range(12):
            axes = [np.arange(center[a] - half[a], center[a] + half[a] + step / 2, step)
                    for a in range(k)]
            mesh = np.meshgrid(*axes, indexing="ij")
            thetas = np.stack([m.ravel() for m in mesh], axis=1)
            losses = batch_gehan_loss(log_times, events, X, thetas)
            best = thetas[int(np.argmin(losses))]
            on_edge = any(best[a] <= axes[a][0] + 2 * step or
                          best[a] >= axes[a][-1] - 2 * step for a in range(k))
            center = best
            if not on_edge:
                break
            half = half * 2.0
        half = np.full(k, 12 * step)  # next stage window
    return center


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
