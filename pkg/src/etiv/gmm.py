"""Frequentist baselines: 2SLS, two-step GMM, J statistic, MSC criteria.

The moment functions are affine in the parameters, so both GMM steps
reduce to weighted linear least squares.  Free endogeneity components
are concentrated out: their moment rows are fit exactly by setting the
component to the sample mean, and the J statistic is computed on the
remaining moments only.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .exceptions import IdentificationError
from .moments import (MomentModel, ParamVector, instrument_matrix,
                      moment_jacobian, moment_matrix, regressor_matrix)


@dataclass(frozen=True)
class GmmFit:
    estimate: ParamVector
    asy_cov: np.ndarray
    std_errors: np.ndarray
    J: float
    df: int
    weight: np.ndarray


def _safe_inverse(S: np.ndarray, ridge: float = 1e-10) -> np.ndarray:
    """Inverse with a small ridge fallback for near-singular inputs."""
    d = S.shape[0]
    try:
        cond = np.linalg.cond(S)
    except np.linalg.LinAlgError:
        cond = np.inf
    if not np.isfinite(cond) or cond > 1e14:
        bump = ridge * max(np.trace(S) / d, 1.0)
        S = S + bump * np.eye(d)
    return np.linalg.inv(S)


def two_step_gmm(model: MomentModel, ds: Dataset) -> GmmFit:
    """Efficient two-step GMM with concentrated endogeneity components.

    Step 1 uses the identity weight; step 2 uses the inverse of the
    centered moment outer-product evaluated at the step-1 estimate.
    """
    p, k, d = model.p, model.k, model.d
    zero = ParamVector(np.zeros(p), np.zeros(k))
    rows0 = moment_matrix(model, ds, zero)
    n_blocks = rows0.shape[0]
    jac = moment_jacobian(model, ds)
    jac_theta = jac[:, :p]
    masked = model.masked_indices
    unmasked = np.setdiff1d(np.arange(d), masked)
    a_u = rows0[:, unmasked].mean(axis=0)
    J_u = jac_theta[unmasked]
    if np.linalg.matrix_rank(J_u) < p:
        raise IdentificationError("moment Jacobian is rank deficient")

    # step 1: 2SLS-style weight inv(Z'Z/n) on the unmasked moments, so
    # the first step (and hence the whole fit) is invariant to
    # rescaling instrument columns
    Zu = instrument_matrix(model, ds)[:, unmasked]
    W0 = _safe_inverse(Zu.T @ Zu / ds.n)
    theta1 = np.linalg.solve(J_u.T @ W0 @ J_u, -(J_u.T @ W0 @ a_u))

    v1 = rows0[:, masked].mean(axis=0) + jac_theta[masked] @ theta1
    rows1 = moment_matrix(model, ds, ParamVector(theta1, v1))
    S_u = np.cov(rows1[:, unmasked], rowvar=False,
                 bias=True).reshape(len(unmasked), -1)
    W = _safe_inverse(S_u)

    # step 2: weighted least squares
    JWJ = J_u.T @ W @ J_u
    theta2 = np.linalg.solve(JWJ, -(J_u.T @ W @ a_u))

    gbar_u = a_u + J_u @ theta2
    J_stat = float(n_blocks * gbar_u @ W @ gbar_u)
    if J_stat < 0:
        J_stat = 0.0
    # an exact fit leaves only rounding noise in the moments, and the
    # inverse of the (noise-scale) covariance would blow it back up
    eps2 = ds.y - regressor_matrix(model, ds) @ theta2
    if np.abs(eps2).max() <= 1e-10 * (1.0 + np.abs(ds.y).max()):
        J_stat = 0.0

    v_hat = rows0[:, masked].mean(axis=0) + jac_theta[masked] @ theta2
    estimate = ParamVector(theta2, v_hat)

    # joint asymptotic covariance of (theta, v_free) via the efficient
    # formula with the full moment covariance at the final estimate
    rows_full = moment_matrix(model, ds, estimate)
    S_full = np.cov(rows_full, rowvar=False, bias=True).reshape(d, d)
    S_inv = _safe_inverse(S_full)
    info = jac.T @ S_inv @ jac
    asy_cov = _safe_inverse(info) / n_blocks
    asy_cov = 0.5 * (asy_cov + asy_cov.T)
    std = np.sqrt(np.maximum(np.diag(asy_cov), 0.0))

    return GmmFit(estimate, asy_cov, std, J_stat, d - p - k, W)


def two_sls(model: MomentModel, ds: Dataset) -> np.ndarray:
    """Two-stage least squares estimate of theta (ignores the v mask)."""
    Z = instrument_matrix(model, ds)
    W1 = regressor_matrix(model, ds)
    y = ds.y
    ZtZ_inv = _safe_inverse(Z.T @ Z)
    A = W1.T @ Z @ ZtZ_inv
    lhs = A @ (Z.T @ W1)
    rhs = A @ (Z.T @ y)
    return np.linalg.solve(lhs, rhs)


@dataclass(frozen=True)
class MscReport:
    """Per-model J statistics and penalized criteria, with selections."""

    names: list[str]
    J: np.ndarray
    df: np.ndarray
    gmm_bic: np.ndarray
    gmm_aic: np.ndarray
    gmm_hqic: np.ndarray
    selected: dict[str, str]

    def rows(self) -> list[dict]:
        return [
            {
                "model": self.names[i],
                "J": float(self.J[i]),
                "df": int(self.df[i]),
                "gmm_bic": float(self.gmm_bic[i]),
                "gmm_aic": float(self.gmm_aic[i]),
                "gmm_hqic": float(self.gmm_hqic[i]),
            }
            for i in range(len(self.names))
        ]


def msc_criteria(fits: dict[str, GmmFit], n: int) -> MscReport:
    """Penalized J criteria; selection is the per-criterion minimum.

    BIC penalty: df * ln(n); AIC: 2 * df; HQIC: 2.01 * df * ln(ln(n)).
    Ties are broken toward the model with larger df (more
    overidentifying restrictions).
    """
    names = list(fits)
    J = np.array([fits[m].J for m in names])
    df = np.array([fits[m].df for m in names])
    bic = J - df * math.log(n)
    aic = J - 2.0 * df
    hqic = J - 2.01 * df * math.log(math.log(n))
    selected = {}
    for crit, vals in (("gmm_bic", bic), ("gmm_aic", aic), ("gmm_hqic", hqic)):
        order = sorted(range(len(names)), key=lambda i: (vals[i], -df[i]))
        selected[crit] = names[order[0]]
    return MscReport(names, J, df, bic, aic, hqic, selected)
