"""Gaussian-copula data generation and the Monte Carlo harness.

The main design draws a latent Gaussian triple whose first coordinate is
pushed through the probability-integral transform onto a skewed normal
mixture to produce the regression error, while the second coordinate
becomes the first-stage error; their latent correlation controls the
degree of endogeneity.  Two further designs cover a two-regressor
setting (only the first regressor endogenous) and a quadratic-in-x
setting.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from multiprocessing import get_context

import numpy as np
from scipy.stats import norm

from .data import Dataset
from .exceptions import ConfigError, EvidenceError, FitError
from .moments import MomentModel
from .posterior import MhConfig


@dataclass(frozen=True)
class MixtureMargin:
    """Two-component normal mixture used as the error margin."""

    weights: tuple[float, ...] = (0.5, 0.5)
    means: tuple[float, ...] = (0.5, -0.5)
    sds: tuple[float, ...] = (0.5, 1.118)

    def __post_init__(self):
        if abs(sum(self.weights) - 1.0) > 1e-12:
            raise ConfigError("mixture weights must sum to 1")
        if any(s <= 0 for s in self.sds):
            raise ConfigError("mixture sds must be positive")

    def cdf(self, m) -> np.ndarray:
        m = np.asarray(m, dtype=float)
        out = np.zeros_like(m)
        for w, mu, s in zip(self.weights, self.means, self.sds):
            out = out + w * norm.cdf((m - mu) / s)
        return out

    def variance(self) -> float:
        mean = sum(w * mu for w, mu in zip(self.weights, self.means))
        return sum(
            w * (s ** 2 + (mu - mean) ** 2)
            for w, mu, s in zip(self.weights, self.means, self.sds)
        )


DEFAULT_MARGIN = MixtureMargin()


def mixture_inverse_cdf(u, margin: MixtureMargin = DEFAULT_MARGIN) -> np.ndarray:
    """Inverse mixture CDF by bisection, vectorized over u in (0,1)."""
    u_arr = np.asarray(u, dtype=float)
    scalar = u_arr.ndim == 0
    u_arr = np.atleast_1d(u_arr)
    if np.any((u_arr <= 0.0) | (u_arr >= 1.0)):
        raise ConfigError("u must lie strictly inside (0, 1)")
    lo = np.full_like(u_arr, -12.0)
    hi = np.full_like(u_arr, 12.0)
    # expand the bracket where needed
    for _ in range(60):
        bad_lo = margin.cdf(lo) > u_arr
        bad_hi = margin.cdf(hi) < u_arr
        if not (bad_lo.any() or bad_hi.any()):
            break
        lo[bad_lo] *= 2.0
        hi[bad_hi] *= 2.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        below = margin.cdf(mid) < u_arr
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.max(hi - lo) < 1e-12:
            break
    out = 0.5 * (lo + hi)
    return float(out[0]) if scalar else out


def _stein_coefficient(margin: MixtureMargin, nodes: int = 201) -> float:
    """E[F_inv(Phi(Z)) Z] for standard normal Z, by Gauss-Hermite."""
    t, w = np.polynomial.hermite.hermgauss(nodes)
    z = np.sqrt(2.0) * t
    u = np.clip(norm.cdf(z), 1e-15, 1 - 1e-15)
    h = mixture_inverse_cdf(u, margin)
    return float(np.sum(w * h * z) / np.sqrt(np.pi))


@dataclass(frozen=True)
class DgpConfig:
    """Single-treatment IV design with copula-linked errors."""

    n: int
    seed: int
    rho: float
    beta: float = 1.0
    gamma0: float = 1.0
    gamma1: float = 1.0
    delta0: float = 1.0
    delta1: float = 0.5
    delta2: float = 1.0
    margin: MixtureMargin = DEFAULT_MARGIN

    def __post_init__(self):
        if not -1.0 < self.rho < 1.0:
            raise ConfigError("rho must lie in (-1, 1)")
        if self.n < 1:
            raise ConfigError("n must be positive")

    def copula_correlation(self) -> np.ndarray:
        R = np.array([
            [1.0, self.rho, 0.0],
            [self.rho, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ])
        if np.linalg.eigvalsh(R).min() < 0:
            raise ConfigError("copula correlation matrix is not PSD")
        return R


def generate_dataset(cfg: DgpConfig) -> Dataset:
    """Draw a dataset from the single-treatment copula design.

    Columns: y; x; z1 = (ones, control); z2 = instrument.
    """
    rng = np.random.default_rng(cfg.seed)
    R = cfg.copula_correlation()
    L = np.linalg.cholesky(R)
    latent = rng.standard_normal((cfg.n, 3)) @ L.T
    eps = mixture_inverse_cdf(
        np.clip(norm.cdf(latent[:, 0]), 1e-15, 1 - 1e-15), cfg.margin
    )
    u = latent[:, 1]
    z1 = latent[:, 2]
    z2 = rng.standard_normal(cfg.n)
    x = cfg.delta0 + cfg.delta1 * z1 + cfg.delta2 * z2 + u
    y = cfg.gamma0 + cfg.beta * x + cfg.gamma1 * z1 + eps
    ones = np.ones(cfg.n)
    return Dataset(y, x, np.column_stack([ones, z1]), z2)


@dataclass(frozen=True)
class TwoRegressorDgp:
    """Two treatments; only the first is endogenous (cov with error 0.5).

    Each treatment loads with unit coefficient on its own independent
    standard-normal instrument, plus a shared exogenous covariate.
    """

    n: int = 500
    seed: int = 0
    beta1: float = 1.0
    beta2: float = 0.8
    gamma0: float = 1.0
    gamma1: float = 0.6
    cov_x1_eps: float = 0.5
    margin: MixtureMargin = DEFAULT_MARGIN


def generate_two_regressor_dataset(cfg: TwoRegressorDgp) -> Dataset:
    rng = np.random.default_rng(cfg.seed)
    a = _stein_coefficient(cfg.margin)
    rho1 = cfg.cov_x1_eps / a
    if not -1.0 < rho1 < 1.0:
        raise ConfigError("requested endogeneity covariance is unattainable")
    e = rng.standard_normal((cfg.n, 2))
    e_eps = e[:, 0]
    u1 = rho1 * e_eps + np.sqrt(1 - rho1 ** 2) * e[:, 1]
    eps = mixture_inverse_cdf(
        np.clip(norm.cdf(e_eps), 1e-15, 1 - 1e-15), cfg.margin
    )
    u2 = rng.standard_normal(cfg.n)
    z1 = rng.standard_normal(cfg.n)
    z2a = rng.standard_normal(cfg.n)
    z2b = rng.standard_normal(cfg.n)
    x1 = 1.0 + 0.5 * z1 + z2a + u1
    x2 = 1.0 + 0.5 * z1 + z2b + u2
    y = cfg.beta1 * x1 + cfg.beta2 * x2 + cfg.gamma0 + cfg.gamma1 * z1 + eps
    ones = np.ones(cfg.n)
    return Dataset(y, np.column_stack([x1, x2]),
                   np.column_stack([ones, z1]),
                   np.column_stack([z2a, z2b]))


@dataclass(frozen=True)
class QuadraticDgp:
    """Quadratic-in-x outcome with an endogenous treatment.

    The treatment block of the dataset is (x, x^2) and the instrument
    block is (z2, z2^2), so linear specifications are expressed by
    pinning the x^2 coefficient to zero while keeping its moment.
    """

    n: int = 500
    seed: int = 0
    gamma0: float = 0.5
    beta1: float = 1.0
    beta2: float = 1.0
    gamma1: float = 0.8
    cov_x_eps: float = 0.5
    margin: MixtureMargin = DEFAULT_MARGIN


def generate_quadratic_dataset(cfg: QuadraticDgp) -> Dataset:
    rng = np.random.default_rng(cfg.seed)
    a = _stein_coefficient(cfg.margin)
    rho1 = cfg.cov_x_eps / a
    if not -1.0 < rho1 < 1.0:
        raise ConfigError("requested endogeneity covariance is unattainable")
    e = rng.standard_normal((cfg.n, 2))
    e_eps = e[:, 0]
    u = rho1 * e_eps + np.sqrt(1 - rho1 ** 2) * e[:, 1]
    eps = mixture_inverse_cdf(
        np.clip(norm.cdf(e_eps), 1e-15, 1 - 1e-15), cfg.margin
    )
    z1 = rng.standard_normal(cfg.n)
    z2 = rng.standard_normal(cfg.n)
    x = 1.0 + z1 + 0.8 * z2 + u
    y = cfg.gamma0 + cfg.beta1 * x + cfg.beta2 * x ** 2 \
        + cfg.gamma1 * z1 + eps
    ones = np.ones(cfg.n)
    return Dataset(y, np.column_stack([x, x ** 2]),
                   np.column_stack([ones, z1]),
                   np.column_stack([z2, z2 ** 2]))


@dataclass(frozen=True)
class McGrid:
    """Replication grid for the selection-frequency experiment."""

    rhos: tuple[float, ...]
    ns: tuple[int, ...]
    replications: int = 20
    base_seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if any(n < 50 for n in self.ns):
            raise ConfigError("all sample sizes must be >= 50")


def _rep_seeds(base_seed: int, i_rho: int, i_n: int, rep: int) -> tuple[int, int]:
    ss = np.random.SeedSequence([base_seed, i_rho, i_n, rep])
    data_seed, mh_seed = ss.generate_state(2)
    return int(data_seed), int(mh_seed)


def _one_replication(args) -> tuple[float | None, str | None]:
    """Worker: one end-to-end base-vs-extended comparison.

    Returns (log Bayes factor extended over base, error message).
    """
    rho, n, data_seed, mh_seed, mh_kwargs, prior_kwargs = args
    from .evidence import fit_model
    from .priors import build_training_prior

    try:
        ds = generate_dataset(DgpConfig(n=n, seed=data_seed, rho=rho))
        cfg = MhConfig(seed=mh_seed, **mh_kwargs)
        base = MomentModel.for_dataset(ds)
        ext = base.extended()
        prior_b = build_training_prior(ds, base, **prior_kwargs)
        prior_e = build_training_prior(ds, ext, **prior_kwargs)
        _, est_b = fit_model(base, ds, prior_b, cfg)
        _, est_e = fit_model(ext, ds, prior_e, cfg)
        return est_e.log_ml - est_b.log_ml, None
    except (FitError, EvidenceError, ConfigError) as exc:
        return None, str(exc)


def run_mc(grid: McGrid, mh_kwargs: dict | None = None,
           prior_kwargs: dict | None = None) -> list[dict]:
    """Selection-frequency table over the (rho, n) grid.

    Per-replication seeds are derived from (base_seed, rho index,
    n index, rep), so results are identical regardless of the degree
    of parallelism.
    """
    mh_kwargs = dict(mh_kwargs or {})
    prior_kwargs = dict(prior_kwargs or {})
    tasks, cells = [], []
    for i_rho, rho in enumerate(grid.rhos):
        for i_n, n in enumerate(grid.ns):
            cells.append((rho, n))
            for rep in range(grid.replications):
                data_seed, mh_seed = _rep_seeds(grid.base_seed, i_rho, i_n, rep)
                tasks.append((rho, n, data_seed, mh_seed,
                              mh_kwargs, prior_kwargs))

    t0 = time.monotonic()
    if grid.jobs > 1:
        with get_context("fork").Pool(grid.jobs) as pool:
            results = pool.map(_one_replication, tasks)
    else:
        results = [_one_replication(t) for t in tasks]
    wall = time.monotonic() - t0

    table = []
    idx = 0
    for rho, n in cells:
        chunk = results[idx:idx + grid.replications]
        idx += grid.replications
        bfs = [r[0] for r in chunk if r[0] is not None]
        failures = sum(1 for r in chunk if r[0] is None)
        wins = sum(1 for bf in bfs if bf > 0)
        table.append({
            "rho": rho,
            "n": n,
            "reps": grid.replications,
            "extended_wins": wins,
            "failures": failures,
            "mean_log_bf": float(np.mean(bfs)) if bfs else float("nan"),
            "wall_time_s": wall / len(cells),
        })
    return table
