"""Minimizers for L1 regression objectives sum_s |V_s - theta'W_s|.

Two interchangeable methods:

* ``solve_exact_l1`` reformulates the problem as a linear program (split
  residual bounds) and solves it with HiGHS.  Exact, but requires fewer
  columns than rows and scales poorly with wide designs.
* ``solve_smoothed`` replaces |u| with the smooth convex surrogate
  rho_eps(u) = sqrt(u^2 + eps^2) - eps, which sandwiches |u| within eps,
  and minimizes it with L-BFGS while driving eps down to a floor
  (continuation with warm starts).  A finishing pass of exact coordinate
  descent (weighted medians) sharpens the solution and lands penalized
  coordinates exactly on zero when zero is coordinate-optimal.

Pseudo-problems built by :mod:`plaft.gehan` carry one anchor row whose
response is many orders of magnitude above the rest; the smoothed path
evaluates that row in a shifted form (constant subtracted analytically) so
line searches keep full precision.  The shift changes the objective by a
constant only, never the minimizer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog, minimize

from .errors import CapabilityError, PlaftError
from .gehan import PseudoProblem

__all__ = [
    "SolverConfig",
    "SolveOutcome",
    "smoothed_abs",
    "smoothed_objective",
    "solve_exact_l1",
    "solve_smoothed",
    "solve",
]


@dataclass(frozen=True)
class SolverConfig:
    """Settings for the L1 minimizers.

    smoothing_eps defaults (None) to smoothing_eps_scale * median|V_s|.
    grad_tol applies to the max-norm of the smoothed gradient divided by the
    row count, making the default meaningful regardless of problem size.
    max_iterations is the L-BFGS budget per continuation stage;
    polish_sweeps bounds the finishing coordinate-descent sweeps (they stop
    early once no coordinate moves).
    """

    method: str = "smoothed"
    smoothing_eps: float | None = None
    continuation_factor: float = 0.1
    eps_floor: float = 1e-8
    max_iterations: int = 500
    grad_tol: float = 1e-6
    memory_pairs: int = 10
    smoothing_eps_scale: float = 0.1
    polish_sweeps: int = 4
    memory_cap_bytes: int = 2 << 30

    def __post_init__(self):
        if self.method not in ("smoothed", "exact_l1"):
            raise ValueError("method must be 'smoothed' or 'exact_l1'")
        if not 0 < self.continuation_factor < 1:
            raise ValueError("continuation_factor must be in (0, 1)")
        if self.eps_floor <= 0 or self.grad_tol <= 0 or self.smoothing_eps_scale <= 0:
            raise ValueError("eps_floor, grad_tol and smoothing_eps_scale must be positive")
        if self.smoothing_eps is not None and self.smoothing_eps < self.eps_floor:
            raise ValueError("smoothing_eps must be >= eps_floor")
        if self.max_iterations < 1 or self.memory_pairs < 1:
            raise ValueError("max_iterations and memory_pairs must be >= 1")
        if self.polish_sweeps < 0:
            raise ValueError("polish_sweeps must be >= 0")


@dataclass(frozen=True)
class SolveOutcome:
    theta_hat: np.ndarray
    objective: float  # exact sum_s |V_s - theta'W_s|, never the smoothed value
    iterations: int
    converged: bool
    method_used: str
    stage_history: tuple = field(default=())  # (eps, exact shifted objective)


def smoothed_abs(u, eps):
    """rho_eps(u) = sqrt(u^2 + eps^2) - eps; satisfies
    rho_eps(u) <= |u| <= rho_eps(u) + eps."""
    return np.hypot(u, eps) - eps


def smoothed_objective(theta, V, W, eps):
    """Value and gradient of sum_s rho_eps(V_s - theta'W_s).

    The gradient is sum_s (-W_s) * u_s / sqrt(u_s^2 + eps^2).
    """
    theta = np.asarray(theta, dtype=float)
    u = V - W @ theta
    s = np.hypot(u, eps)
    value = float(s.sum()) - eps * u.size
    grad = -(W.T @ (u / s))
    return value, grad


class _ArrayProblem:
    """Materialized (V, W) problem, optionally with a flagged anchor row."""

    def __init__(self, V, W, zeta_row=None):
        self.V = np.asarray(V, dtype=float)
        self.W = np.asarray(W, dtype=float)
        if self.V.ndim != 1 or self.W.ndim != 2 or self.W.shape[0] != self.V.shape[0]:
            raise PlaftError("V must be (S,), W must be (S, k)")
        self.zeta_row = zeta_row
        self.zeta = float(self.V[zeta_row]) if zeta_row is not None else 0.0
        self.n_params = self.W.shape[1]
        self.n_terms = self.V.shape[0]
        absv = np.abs(self.V)
        self.v_scale = float(np.median(absv))
        if self.v_scale == 0.0:
            self.v_scale = float(absv.mean()) or 1.0

    def value_and_grad(self, theta, eps):
        theta = np.asarray(theta, dtype=float)
        u = self.V - self.W @ theta
        s = np.hypot(u, eps)
        grad = -(self.W.T @ (u / s))
        if self.zeta_row is None:
            return float(s.sum()) - eps * u.size, grad
        z = self.zeta_row
        value = float(s.sum() - s[z]) - eps * (u.size - 1)
        r = float(self.W[z] @ theta)
        big = self.zeta - r
        if big > 0:  # stable smoothed |big| minus the constant zeta
            value += -r + eps * eps / (np.hypot(big, eps) + big) - eps
        else:
            value += float(np.hypot(big, eps)) - eps - self.zeta
        return value, grad

    def exact_shifted(self, theta):
        theta = np.asarray(theta, dtype=float)
        u = self.V - self.W @ theta
        total = float(np.abs(u).sum())
        if self.zeta_row is None:
            return total
        z = self.zeta_row
        total -= float(abs(u[z]))
        r = float(self.W[z] @ theta)
        big = self.zeta - r
        return total + (-r if big >= 0 else abs(big) - self.zeta)

    def exact_literal(self, theta):
        theta = np.asarray(theta, dtype=float)
        return float(np.abs(self.V - self.W @ theta).sum())

    def residual(self, theta):
        return self.V - self.W @ np.asarray(theta, dtype=float)

    def column(self, c):
        return self.W[:, c]


def _as_problem(problem):
    if isinstance(problem, PseudoProblem):
        return _ArrayProblem(problem.V, problem.W, zeta_row=problem.zeta_row)
    if isinstance(problem, tuple):
        V, W = problem
        return _ArrayProblem(V, W)
    if hasattr(problem, "value_and_grad"):
        return problem
    raise TypeError("expected PseudoProblem, (V, W) pair, or objective adapter")


def solve_exact_l1(problem) -> SolveOutcome:
    """Global minimizer of sum_s |V_s - theta'W_s| by linear programming.

    Requires W to have at most S-1 columns; wider problems must use the
    smoothed method.  The reported objective is recomputed from theta_hat.
    """
    if isinstance(problem, PseudoProblem):
        V, W = problem.V, problem.W
    else:
        V, W = problem
        V = np.asarray(V, dtype=float)
        W = np.asarray(W, dtype=float)
    S, k = W.shape
    if k > S - 1:
        raise CapabilityError(
            "exact L1 solver needs cols <= rows-1 (got %d cols, %d rows); "
            "use the smoothed solver" % (k, S))
    Wsp = sparse.csr_matrix(W)
    eye = sparse.identity(S, format="csr")
    A = sparse.vstack([sparse.hstack([Wsp, -eye]), sparse.hstack([-Wsp, -eye])], format="csr")
    b = np.concatenate([V, -V])
    c = np.concatenate([np.zeros(k), np.ones(S)])
    bounds = [(None, None)] * k + [(0, None)] * S
    res = linprog(c, A_ub=A, b_ub=b, bounds=bounds, method="highs")
    if not res.success:
        raise PlaftError("exact L1 solver failed: %s" % res.message)
    theta = res.x[:k]
    objective = float(np.abs(V - W @ theta).sum())
    return SolveOutcome(theta_hat=theta, objective=objective,
                        iterations=int(getattr(res, "nit", 0) or 0),
                        converged=True, method_used="exact_l1")


def _weighted_median(points, weights):
    o = np.argsort(points)
    cw = np.cumsum(weights[o])
    k = int(np.searchsorted(cw, 0.5 * cw[-1]))
    return points[o][min(k, points.size - 1)]


def coordinate_polish(prob, theta, max_sweeps):
    """Cyclic exact coordinate descent on the L1 objective.

    Each coordinate update is a weighted median, which minimizes the
    objective exactly along that axis, so every sweep weakly decreases the
    exact objective.  Marginal penalized coordinates land exactly on zero
    when zero is axis-optimal.  Stops early once a full sweep moves nothing;
    at that fixed point the result depends only on the final residuals, not
    on the sweep order.
    """
    th = np.asarray(theta, dtype=float).copy()
    for _ in range(max_sweeps):
        r = prob.residual(th)
        moved = False
        for c in range(th.size):
            w = prob.column(c)
            nz = w != 0
            if not nz.any():
                continue
            wc = w[nz]
            pts = (r[nz] + wc * th[c]) / wc
            t_new = _weighted_median(pts, np.abs(wc))
            if t_new != th[c]:
                r = r + w * (th[c] - t_new)
                th[c] = t_new
                moved = True
        if not moved:
            break
    return th


def _eps_schedule(eps0, floor, factor):
    stages, e = [], eps0
    while e > floor:
        stages.append(e)
        e *= factor
    stages.append(floor)
    return stages


def solve_smoothed(problem, config: SolverConfig = None, theta0=None) -> SolveOutcome:
    """Continuation smoothing: minimize sum_s rho_eps(V_s - theta'W_s) with
    L-BFGS, shrinking eps geometrically to eps_floor with warm starts, then
    polish with exact coordinate descent.

    Each stage's result is accepted only if it does not increase the exact
    L1 objective (monotone safeguard), so the exact objective is
    non-increasing along the continuation path; the polish step can only
    decrease it further.  The converged flag reports whether the scaled
    smoothed gradient at eps_floor fell below grad_tol at the end of the
    continuation (before polishing).
    """
    prob = _as_problem(problem)
    cfg = config or SolverConfig()
    scale = 1.0 / prob.n_terms
    x = (np.zeros(prob.n_params) if theta0 is None
         else np.asarray(theta0, dtype=float).copy())
    eps0 = (cfg.smoothing_eps if cfg.smoothing_eps is not None
            else cfg.smoothing_eps_scale * prob.v_scale)
    eps0 = max(eps0, cfg.eps_floor)

    def fun(theta, eps):
        v, g = prob.value_and_grad(theta, eps)
        return v * scale, g * scale

    best = x
    best_exact = prob.exact_shifted(x)
    history = []
    iterations = 0
    for eps in _eps_schedule(eps0, cfg.eps_floor, cfg.continuation_factor):
        res = minimize(fun, x, args=(eps,), jac=True, method="L-BFGS-B",
                       options={"maxcor": cfg.memory_pairs, "maxiter": cfg.max_iterations,
                                "gtol": cfg.grad_tol, "ftol": 1e-15})
        iterations += int(res.nit)
        exact = prob.exact_shifted(res.x)
        if exact <= best_exact:
            best, best_exact = res.x, exact
        x = best
        history.append((eps, best_exact))
    _, g = prob.value_and_grad(best, cfg.eps_floor)
    converged = bool(np.max(np.abs(g)) * scale < cfg.grad_tol)
    if cfg.polish_sweeps > 0 and hasattr(prob, "column"):
        polished = coordinate_polish(prob, best, cfg.polish_sweeps)
        exact = prob.exact_shifted(polished)
        if exact <= best_exact:
            best, best_exact = polished, exact
            history.append((0.0, best_exact))
    return SolveOutcome(theta_hat=np.asarray(best, dtype=float),
                        objective=prob.exact_literal(best),
                        iterations=iterations, converged=converged, method_used="smoothed",
                        stage_history=tuple(history))


def solve(problem, config: SolverConfig = None, theta0=None) -> SolveOutcome:
    cfg = config or SolverConfig()
    if cfg.method == "exact_l1":
        return solve_exact_l1(problem)
    return solve_smoothed(problem, cfg, theta0)
