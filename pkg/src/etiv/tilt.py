"""Exponential-tilting weights via the convex dual, plus a primal oracle.

Given moment rows ``g_1..g_n`` the tilting multiplier minimizes
``f(lambda) = (1/n) sum_i exp(lambda' g_i)``, a smooth convex function.
At the minimizer the softmax of ``lambda' g_i`` gives strictly positive
weights that satisfy the weighted moment constraint, and their log-sum
is the log likelihood value.  Zero lying outside the convex hull of the
rows makes the program infeasible; operationally this shows up as the
multiplier diverging, which the solver detects via a norm cap and an
iteration cap.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .exceptions import DataError, FitError


@dataclass(frozen=True)
class TiltConfig:
    """Solver knobs for the dual Newton iteration."""

    grad_tol: float = 1e-10
    max_iters: int = 100
    lambda_cap: float = 1e4
    armijo_c: float = 1e-4
    backtrack: float = 0.5

    def __post_init__(self):
        for name in ("grad_tol", "lambda_cap", "armijo_c", "backtrack"):
            if getattr(self, name) <= 0:
                raise DataError(f"{name} must be positive")
        if self.max_iters < 1:
            raise DataError("max_iters must be positive")


DEFAULT_TILT_CONFIG = TiltConfig()


@dataclass(frozen=True)
class TiltSolution:
    """Dual multiplier, weights and log likelihood for one solve."""

    lam: np.ndarray
    weights: np.ndarray | None
    log_etel: float
    feasible: bool
    grad_norm: float
    iterations: int


def _dual_value(lam: np.ndarray, G: np.ndarray) -> float:
    """f(lam) = mean(exp(G lam)), overflow-guarded."""
    t = G @ lam
    m = t.max()
    scale = np.exp(m) if m < 700 else np.inf
    return float(np.exp(t - m).mean() * scale)


def _dual_value_grad_hess(lam: np.ndarray, G: np.ndarray):
    """f, grad f, Hessian f for f(lam) = mean(exp(G lam)).

    Returns them jointly, scaled so overflow in exp is avoided: values
    are computed relative to the max exponent and rescaled, which is
    exact in floating point up to the common factor.
    """
    t = G @ lam
    m = t.max()
    e = np.exp(t - m)
    scale = np.exp(m) if m < 700 else np.inf
    f = e.mean() * scale
    grad = (G.T @ e) / G.shape[0] * scale
    hess = (G.T * e) @ G / G.shape[0] * scale
    return f, grad, hess


def solve_tilt(G: np.ndarray, cfg: TiltConfig = DEFAULT_TILT_CONFIG) -> TiltSolution:
    """Solve the dual tilting problem for a matrix of moment rows.

    Damped Newton with Armijo backtracking, started at zero.  Declares
    infeasibility when the multiplier norm blows past the cap or the
    iteration budget is exhausted without meeting the gradient test.
    """
    G = np.asarray(G, dtype=float)
    if G.ndim == 1:
        G = G.reshape(-1, 1)
    n, d = G.shape
    if d == 0:
        raise DataError("moment matrix has zero columns")
    if not np.all(np.isfinite(G)):
        raise FitError("non-finite moment rows")
    if n < d:
        warnings.warn(
            f"fewer rows ({n}) than moment dimension ({d}); "
            "tilting problem is likely infeasible",
            stacklevel=2,
        )

    row_norms = np.linalg.norm(G, axis=1)
    med = np.median(row_norms)
    cap = cfg.lambda_cap * (1.0 + (1.0 / med if med > 0 else 1.0))

    lam = np.zeros(d)
    t = G @ lam
    e = np.exp(t)
    f = e.sum() / n
    grad = G.T @ e / n
    hess = (G.T * e) @ G / n
    it = 0
    for it in range(1, cfg.max_iters + 1):
        gnorm = np.abs(grad).max()
        if gnorm <= cfg.grad_tol * max(1.0, f):
            break
        ridge = 1e-10 * np.trace(hess) / d
        try:
            step = np.linalg.solve(hess + ridge * np.eye(d), grad)
        except np.linalg.LinAlgError:
            step = grad
        # Armijo backtracking on the descent direction -step; trial
        # points reuse t = G lam and dt = G step so each one is a pure
        # vector update, with overflow checked before exponentiating
        dt = G @ step
        alpha = 1.0
        slope = float(grad @ step)
        accepted = False
        while alpha > 1e-16:
            t_new = t - alpha * dt
            m = t_new.max()
            if m < 700.0:
                e_new = np.exp(t_new)
                f_new = e_new.sum() / n
                if f_new <= f - cfg.armijo_c * alpha * slope:
                    accepted = True
                    break
            alpha *= cfg.backtrack
        if not accepted:
            return TiltSolution(lam, None, -np.inf, False,
                                float(np.abs(grad).max()), it)
        lam = lam - alpha * step
        if f_new < 1e-12 or np.linalg.norm(lam) > cap:
            # the dual is unbounded below toward zero exactly when zero
            # lies outside the convex hull of the rows
            return TiltSolution(lam, None, -np.inf, False,
                                float(np.abs(grad).max()), it)
        t, e, f = t_new, e_new, f_new
        grad = G.T @ e / n
        hess = (G.T * e) @ G / n

    gnorm = float(np.abs(grad).max())
    t = G @ lam
    log_w = t - logsumexp(t)
    weights = np.exp(log_w)
    # feasibility is decided by the weighted moment constraint itself:
    # the raw gradient underflows spuriously when zero is outside the
    # convex hull (f -> 0), and stalls just above grad_tol on badly
    # scaled columns even though the weights are already accurate
    residual = np.abs(weights @ G).max()
    if residual > 1e-8 * (1.0 + np.abs(G).max()):
        return TiltSolution(lam, None, -np.inf, False, gnorm, it)
    log_etel = float(log_w.sum())
    return TiltSolution(lam, weights, log_etel, True, gnorm, it)


def log_etel_identity_check(sol: TiltSolution, G: np.ndarray) -> float:
    """Absolute gap between the two exact forms of the log likelihood.

    The summed log weights must equal
    ``-n log n + sum_i lam' g_i - n log(mean_j exp(lam' g_j))``.
    """
    if not sol.feasible:
        raise FitError("identity check requires a feasible solution")
    G = np.asarray(G, dtype=float)
    if G.ndim == 1:
        G = G.reshape(-1, 1)
    n = G.shape[0]
    t = G @ sol.lam
    rhs = -n * np.log(n) + t.sum() - n * (logsumexp(t) - np.log(n))
    return float(abs(sol.log_etel - rhs))


def primal_oracle(G: np.ndarray, tol: float = 1e-8,
                  max_iters: int = 200_000) -> np.ndarray:
    """Brute-force solve of the primal reweighting problem on tiny inputs.

    Minimizes ``sum_i q_i log(n q_i)`` over the simplex subject to the
    weighted moment constraint, by projected gradient descent with
    re-projection onto the affine constraint set.  Intended only as an
    independent test oracle for n <= 8, d <= 2.
    """
    G = np.asarray(G, dtype=float)
    if G.ndim == 1:
        G = G.reshape(-1, 1)
    n, d = G.shape
    if n > 8 or d > 2:
        raise DataError("primal oracle only supports n <= 8, d <= 2")

    # affine constraints: A q = b with A = [1'; G'], b = (1, 0..0)
    A = np.vstack([np.ones(n), G.T])
    b = np.zeros(d + 1)
    b[0] = 1.0
    q = _interior_feasible_point(G)
    if q is None:
        raise FitError("primal problem infeasible: zero not strictly "
                       "inside the convex hull of the rows")

    # projector onto the nullspace of A
    AtA_inv = np.linalg.pinv(A @ A.T)
    def project(v):
        return v - A.T @ (AtA_inv @ (A @ v))

    step = 0.1 / n
    obj = float(np.sum(q * np.log(n * q)))
    for _ in range(max_iters):
        grad = np.log(n * q) + 1.0
        direction = project(-grad)
        if np.linalg.norm(direction) < 1e-14:
            break
        alpha = step
        improved = False
        while alpha > 1e-18:
            q_new = q + alpha * direction
            # restore the affine constraints exactly
            q_new = q_new - A.T @ (AtA_inv @ (A @ q_new - b))
            if np.all(q_new > 0):
                obj_new = float(np.sum(q_new * np.log(n * q_new)))
                if obj_new < obj - 1e-16:
                    q, obj = q_new, obj_new
                    improved = True
                    break
            alpha *= 0.5
        if not improved:
            break
        if np.linalg.norm(direction) * step < tol * 1e-3:
            break
    return q


def _interior_feasible_point(G: np.ndarray, margin_tol: float = 1e-9):
    """Strictly interior feasible weights via a max-margin linear program.

    Maximizes t subject to sum q = 1, G'q = 0, q_i >= t.  A positive
    optimum certifies that zero lies strictly inside the convex hull of
    the rows; otherwise returns None.
    """
    from scipy.optimize import linprog

    n, d = G.shape
    # variables: (q_1..q_n, t); objective: maximize t
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_eq = np.zeros((d + 1, n + 1))
    A_eq[0, :n] = 1.0
    A_eq[1:, :n] = G.T
    b_eq = np.zeros(d + 1)
    b_eq[0] = 1.0
    # q_i - t >= 0  ->  -q_i + t <= 0
    A_ub = np.hstack([-np.eye(n), np.ones((n, 1))])
    b_ub = np.zeros(n)
    bounds = [(0.0, 1.0)] * n + [(None, 1.0)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=bounds, method="highs")
    if not res.success or res.x[-1] <= margin_tol:
        return None
    return res.x[:n]


def primal_feasible(G: np.ndarray) -> bool:
    """Exact feasibility test for tiny instances (LP membership)."""
    G = np.asarray(G, dtype=float)
    if G.ndim == 1:
        G = G.reshape(-1, 1)
    return _interior_feasible_point(G) is not None
