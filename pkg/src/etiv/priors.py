"""Coordinatewise prior specifications and data-driven prior construction.

Priors are independent across coordinates, each either normal or
Student-t.  The default data-driven recipe centers a thick-tailed
Student-t at a GMM fit with scale equal to twice the GMM standard
error (i.e. four times the asymptotic variance).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .data import Dataset
from .exceptions import DataError
from .moments import MomentModel, ParamVector

NORMAL = "normal"
STUDENT_T = "student_t"


@dataclass(frozen=True)
class PriorSpec:
    """Per-coordinate family, location, scale and (for t) df."""

    families: tuple[str, ...]
    locations: np.ndarray
    scales: np.ndarray
    dfs: np.ndarray

    def __post_init__(self):
        loc = np.asarray(self.locations, dtype=float).reshape(-1)
        scale = np.asarray(self.scales, dtype=float).reshape(-1)
        dfs = np.asarray(self.dfs, dtype=float).reshape(-1)
        fam = tuple(self.families)
        m = len(fam)
        if not (loc.shape[0] == scale.shape[0] == dfs.shape[0] == m):
            raise DataError("prior component lengths disagree")
        if np.any(scale <= 0):
            raise DataError("prior scales must be strictly positive")
        for f in fam:
            if f not in (NORMAL, STUDENT_T):
                raise DataError(f"unknown prior family {f!r}")
        if any(f == STUDENT_T for f in fam) and np.any(
            dfs[[f == STUDENT_T for f in fam]] <= 0
        ):
            raise DataError("student_t df must be positive")
        object.__setattr__(self, "families", fam)
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "scales", scale)
        object.__setattr__(self, "dfs", dfs)

    @property
    def dim(self) -> int:
        return len(self.families)

    @classmethod
    def normal(cls, locations, scales) -> "PriorSpec":
        loc = np.asarray(locations, dtype=float).reshape(-1)
        return cls((NORMAL,) * loc.shape[0], loc, scales,
                   np.full(loc.shape[0], np.nan))

    @classmethod
    def student(cls, locations, scales, df) -> "PriorSpec":
        loc = np.asarray(locations, dtype=float).reshape(-1)
        dfs = np.broadcast_to(np.asarray(df, dtype=float), loc.shape).copy()
        return cls((STUDENT_T,) * loc.shape[0], loc, scales, dfs)

    def to_dict(self) -> dict:
        return {
            "families": list(self.families),
            "locations": self.locations.tolist(),
            "scales": self.scales.tolist(),
            "dfs": [None if np.isnan(v) else v for v in self.dfs],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PriorSpec":
        dfs = np.array([np.nan if v is None else float(v) for v in d["dfs"]])
        return cls(tuple(d["families"]), d["locations"], d["scales"], dfs)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw size x dim iid samples."""
        out = np.empty((size, self.dim))
        for j, fam in enumerate(self.families):
            if fam == NORMAL:
                out[:, j] = rng.normal(self.locations[j], self.scales[j], size)
            else:
                out[:, j] = (self.locations[j]
                             + self.scales[j] * rng.standard_t(self.dfs[j], size))
        return out


def log_prior(spec: PriorSpec, params: ParamVector | np.ndarray) -> float:
    """Sum of independent coordinate log densities (fully normalized)."""
    vec = params.flat() if isinstance(params, ParamVector) else \
        np.asarray(params, dtype=float).reshape(-1)
    if vec.shape[0] != spec.dim:
        raise DataError(
            f"parameter length {vec.shape[0]} does not match prior "
            f"dimension {spec.dim}"
        )
    z = (vec - spec.locations) / spec.scales
    is_t = np.array([f == STUDENT_T for f in spec.families])
    total = -float(np.log(spec.scales).sum())
    if np.any(~is_t):
        zn = z[~is_t]
        total += float(-0.5 * (zn ** 2).sum()
                       - 0.5 * zn.shape[0] * np.log(2 * np.pi))
    if np.any(is_t):
        zt, df = z[is_t], spec.dfs[is_t]
        total += float(np.sum(
            gammaln((df + 1) / 2) - gammaln(df / 2)
            - 0.5 * np.log(df * np.pi)
            - (df + 1) / 2 * np.log1p(zt ** 2 / df)
        ))
    return total


def build_training_prior(train: Dataset, model: MomentModel,
                         inflate: float = 2.0, df: float = 2.5) -> PriorSpec:
    """Student-t prior centered at a GMM fit on the training data.

    Location is the two-step GMM estimate of (theta, free v); scale is
    ``inflate`` times the GMM standard error, so the default inflate=2
    gives prior variance four times the asymptotic variance.
    """
    from .gmm import two_step_gmm

    fit = two_step_gmm(model, train)
    locations = fit.estimate.flat()
    scales = np.maximum(inflate * fit.std_errors, 1e-8)
    return PriorSpec.student(locations, scales, df)
