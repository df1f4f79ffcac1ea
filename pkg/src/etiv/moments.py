"""Parameterized moment functions for base, extended and restricted models.

The moment vector for a flat observation is ``eps(theta) * (x; z1; z2)``
minus a sparse shift that places the free endogeneity components at the
treatment positions selected by ``v_mask``.  For clustered data the
moment row of a cluster is the within-cluster sum of the flat rows,
with the shift applied once per cluster.

``beta_zero`` pins selected treatment coefficients to zero without
removing the corresponding moment; this is how a linear specification
is compared against a quadratic one on a common moment vector (the
squared regressor is a treatment column with its coefficient pinned).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .exceptions import DataError


@dataclass(frozen=True)
class MomentModel:
    """Moment specification: dimensions plus the endogeneity mask.

    ``v_mask[j]`` is True when the moment for treatment column j is
    inactive, i.e. its mean is a free parameter.  All-False is the base
    model; all-True is the fully extended model.
    """

    d_x: int
    d_z1: int
    d_z2: int
    v_mask: tuple[bool, ...]
    clustered: bool = False
    beta_zero: tuple[bool, ...] | None = None

    def __post_init__(self):
        if len(self.v_mask) != self.d_x:
            raise DataError("v_mask length must equal d_x")
        object.__setattr__(self, "v_mask", tuple(bool(b) for b in self.v_mask))
        bz = self.beta_zero
        if bz is None:
            bz = (False,) * self.d_x
        if len(bz) != self.d_x:
            raise DataError("beta_zero length must equal d_x")
        object.__setattr__(self, "beta_zero", tuple(bool(b) for b in bz))

    @property
    def d(self) -> int:
        """Moment dimension."""
        return self.d_x + self.d_z1 + self.d_z2

    @property
    def k(self) -> int:
        """Number of free endogeneity components."""
        return sum(self.v_mask)

    @property
    def p(self) -> int:
        """Number of regression coefficients (beta then gamma)."""
        return sum(not b for b in self.beta_zero) + self.d_z1

    @property
    def n_params(self) -> int:
        return self.p + self.k

    @property
    def masked_indices(self) -> np.ndarray:
        """Moment indices carrying a free v component, ascending."""
        return np.flatnonzero(np.asarray(self.v_mask))

    @property
    def free_beta_indices(self) -> np.ndarray:
        return np.flatnonzero(~np.asarray(self.beta_zero))

    @classmethod
    def for_dataset(cls, ds: Dataset, v_mask=None,
                    beta_zero=None) -> "MomentModel":
        if v_mask is None:
            v_mask = (False,) * ds.d_x
        return cls(ds.d_x, ds.d_z1, ds.d_z2, tuple(v_mask),
                   clustered=ds.clustered,
                   beta_zero=None if beta_zero is None else tuple(beta_zero))

    def base(self) -> "MomentModel":
        return MomentModel(self.d_x, self.d_z1, self.d_z2,
                           (False,) * self.d_x, self.clustered, self.beta_zero)

    def extended(self) -> "MomentModel":
        return MomentModel(self.d_x, self.d_z1, self.d_z2,
                           (True,) * self.d_x, self.clustered, self.beta_zero)

    def with_mask(self, v_mask) -> "MomentModel":
        return MomentModel(self.d_x, self.d_z1, self.d_z2, tuple(v_mask),
                           self.clustered, self.beta_zero)

    def param_names(self) -> list[str]:
        names = [f"beta{j}" for j in self.free_beta_indices]
        names += [f"gamma{j}" for j in range(self.d_z1)]
        names += [f"v{j}" for j in self.masked_indices]
        return names


@dataclass(frozen=True)
class ParamVector:
    """Parameters ordered (beta, gamma) then free v components."""

    theta: np.ndarray
    v_free: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float).reshape(-1)
        v_free = np.asarray(self.v_free, dtype=float).reshape(-1)
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(v_free))):
            raise DataError("non-finite parameter values")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "v_free", v_free)

    @classmethod
    def from_flat(cls, model: MomentModel, vec: np.ndarray) -> "ParamVector":
        vec = np.asarray(vec, dtype=float).reshape(-1)
        if vec.shape[0] != model.n_params:
            raise DataError(
                f"parameter vector has length {vec.shape[0]}, "
                f"expected {model.n_params}"
            )
        return cls(vec[:model.p], vec[model.p:])

    def flat(self) -> np.ndarray:
        return np.concatenate([self.theta, self.v_free])


def regressor_matrix(model: MomentModel, ds: Dataset) -> np.ndarray:
    """n x p matrix of regressors: unpinned x columns then z1."""
    return np.column_stack([ds.x[:, model.free_beta_indices], ds.z1])


def instrument_matrix(model: MomentModel, ds: Dataset) -> np.ndarray:
    """n x d matrix whose i-th row multiplies the residual: (x, z1, z2)."""
    return np.column_stack([ds.x, ds.z1, ds.z2])


def residuals(model: MomentModel, ds: Dataset, params: ParamVector) -> np.ndarray:
    if params.theta.shape[0] != model.p:
        raise DataError("theta length does not match model")
    return ds.y - regressor_matrix(model, ds) @ params.theta


def residual(model: MomentModel, ds: Dataset, params: ParamVector,
             i: int) -> float:
    return float(residuals(model, ds, params)[i])


def _v_shift(model: MomentModel, params: ParamVector) -> np.ndarray:
    if params.v_free.shape[0] != model.k:
        raise DataError("v_free length does not match v_mask")
    shift = np.zeros(model.d)
    shift[model.masked_indices] = params.v_free
    return shift


def moment_matrix(model: MomentModel, ds: Dataset,
                  params: ParamVector) -> np.ndarray:
    """Matrix of moment rows, one per observation (flat) or cluster."""
    eps = residuals(model, ds, params)
    rows = eps[:, None] * instrument_matrix(model, ds)
    if model.clustered and ds.clustered:
        rows = np.add.reduceat(
            rows, [s.start for s in ds.cluster_slices()], axis=0
        )
    return rows - _v_shift(model, params)


def moment_row(model: MomentModel, ds: Dataset, params: ParamVector,
               i: int) -> np.ndarray:
    return moment_matrix(model, ds, params)[i]


def moment_jacobian(model: MomentModel, ds: Dataset) -> np.ndarray:
    """Jacobian of the mean moment with respect to (theta, v_free).

    Parameter-free because moments are affine: the theta block is
    ``-mean(w~ w~1')`` and the v block is minus an indicator on the
    masked rows.
    """
    w = instrument_matrix(model, ds)
    w1 = regressor_matrix(model, ds)
    n_blocks = ds.n_blocks() if model.clustered else ds.n
    jac_theta = -(w.T @ w1) / n_blocks
    jac_v = np.zeros((model.d, model.k))
    jac_v[model.masked_indices, np.arange(model.k)] = -1.0
    return np.hstack([jac_theta, jac_v])
