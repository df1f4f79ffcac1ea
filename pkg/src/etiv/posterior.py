"""Log-posterior evaluation, mode finding and the tailored MH sampler.

The posterior over (theta, v) is the prior times the tilted empirical
likelihood, truncated to the set of parameters where the tilting
problem is feasible.  Sampling uses a one-block independence
Metropolis-Hastings chain whose multivariate Student-t proposal is
centered at the posterior mode with the inverse negated Hessian as its
scale matrix.  Infeasible proposals are rejected immediately (the chain
repeats its current state), which preserves the truncated target.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import multivariate_t

from .data import Dataset
from .exceptions import FitError
from .moments import MomentModel, ParamVector, moment_matrix
from .priors import PriorSpec, log_prior
from .tilt import DEFAULT_TILT_CONFIG, TiltConfig, solve_tilt

NEG_INF = -np.inf


class EtelTarget:
    """Posterior density adapter: prior x tilted empirical likelihood."""

    def __init__(self, model: MomentModel, ds: Dataset, prior: PriorSpec,
                 tilt_cfg: TiltConfig = DEFAULT_TILT_CONFIG):
        if prior.dim != model.n_params:
            raise FitError(
                f"prior dimension {prior.dim} does not match the model's "
                f"{model.n_params} parameters"
            )
        self.model = model
        self.ds = ds
        self.prior = prior
        self.tilt_cfg = tilt_cfg

    @property
    def dim(self) -> int:
        return self.model.n_params

    def log_likelihood(self, vec: np.ndarray) -> float:
        params = ParamVector.from_flat(self.model, vec)
        G = moment_matrix(self.model, self.ds, params)
        sol = solve_tilt(G, self.tilt_cfg)
        return sol.log_etel if sol.feasible else NEG_INF

    def log_prior(self, vec: np.ndarray) -> float:
        return log_prior(self.prior, np.asarray(vec, dtype=float))

    def log_posterior(self, vec: np.ndarray) -> float:
        ll = self.log_likelihood(vec)
        if ll == NEG_INF:
            return NEG_INF
        return ll + self.log_prior(vec)


def log_posterior(model: MomentModel, ds: Dataset, spec: PriorSpec,
                  params: ParamVector) -> float:
    """Prior plus log likelihood, or -inf when tilting is infeasible."""
    return EtelTarget(model, ds, spec).log_posterior(params.flat())


@dataclass(frozen=True)
class MhConfig:
    """Chain lengths, proposal tail thickness and optimizer settings."""

    n_burn: int = 1000
    n_draws: int = 10000
    proposal_df: float = 15.0
    seed: int = 0
    mode_restarts: int = 2
    mode_tol: float = 1e-8
    mode_max_iters: int = 500

    def __post_init__(self):
        if self.n_burn < 0 or self.n_draws < 1:
            raise FitError("chain lengths must be positive")
        if self.proposal_df <= 2:
            raise FitError("proposal_df must exceed 2")


@dataclass
class Chain:
    """MCMC output: draws, trace, acceptance rate, proposal parameters."""

    draws: np.ndarray
    log_post: np.ndarray
    accept_rate: float
    mode: np.ndarray
    V: np.ndarray
    proposal_df: float

    def posterior_mean(self) -> np.ndarray:
        return self.draws.mean(axis=0)

    def posterior_sd(self) -> np.ndarray:
        return self.draws.std(axis=0, ddof=1)

    def credible_interval(self, level: float = 0.95) -> np.ndarray:
        lo = (1 - level) / 2
        return np.quantile(self.draws, [lo, 1 - lo], axis=0).T

    def ess_batch_means(self, n_batches: int = 20) -> np.ndarray:
        """Effective sample size per coordinate from batch means."""
        m = self.draws.shape[0]
        b = m // n_batches
        if b < 2:
            return np.full(self.draws.shape[1], float(m))
        trimmed = self.draws[: b * n_batches]
        batches = trimmed.reshape(n_batches, b, -1).mean(axis=1)
        var_bm = batches.var(axis=0, ddof=1)
        var_all = trimmed.var(axis=0, ddof=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ess = m * var_all / (b * var_bm)
        return np.where(np.isfinite(ess), np.minimum(ess, m), float(m))

    def to_csv(self, path, names: list[str] | None = None) -> None:
        dim = self.draws.shape[1]
        if names is None:
            names = [f"param{j}" for j in range(dim)]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([*names, "log_post"])
            for i in range(self.draws.shape[0]):
                writer.writerow(
                    [repr(float(v)) for v in self.draws[i]]
                    + [repr(float(self.log_post[i]))]
                )


def _fd_gradient(fn, x: np.ndarray, rel: float = 1e-6) -> np.ndarray:
    """Central finite differences, falling back to one-sided at -inf."""
    g = np.zeros_like(x)
    f0 = None
    for j in range(x.shape[0]):
        h = rel * (1.0 + abs(x[j]))
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        fp, fm = fn(xp), fn(xm)
        if np.isfinite(fp) and np.isfinite(fm):
            g[j] = (fp - fm) / (2 * h)
        else:
            if f0 is None:
                f0 = fn(x)
            if np.isfinite(fp):
                g[j] = (fp - f0) / h
            elif np.isfinite(fm):
                g[j] = (f0 - fm) / h
            else:
                g[j] = 0.0
    return g


def _fd_hessian(fn, x: np.ndarray, rel: float = 1e-4) -> np.ndarray:
    """Central finite-difference Hessian with steps rel*(1+|x_j|)."""
    dim = x.shape[0]
    h = rel * (1.0 + np.abs(x))
    H = np.zeros((dim, dim))
    f0 = fn(x)
    fpp = np.zeros(dim)
    fmm = np.zeros(dim)
    for j in range(dim):
        xp, xm = x.copy(), x.copy()
        xp[j] += h[j]
        xm[j] -= h[j]
        fpp[j], fmm[j] = fn(xp), fn(xm)
        H[j, j] = (fpp[j] - 2 * f0 + fmm[j]) / h[j] ** 2
    for j in range(dim):
        for l in range(j + 1, dim):
            xpp, xpm, xmp, xmm = x.copy(), x.copy(), x.copy(), x.copy()
            xpp[[j, l]] += [h[j], h[l]]
            xpm[j] += h[j]
            xpm[l] -= h[l]
            xmp[j] -= h[j]
            xmp[l] += h[l]
            xmm[[j, l]] -= [h[j], h[l]]
            H[j, l] = H[l, j] = (
                fn(xpp) - fn(xpm) - fn(xmp) + fn(xmm)
            ) / (4 * h[j] * h[l])
    return 0.5 * (H + H.T)


def _ascend(fn, x0: np.ndarray, tol: float, max_iters: int) -> np.ndarray:
    """BFGS ascent with backtracking; -inf trial points shrink the step."""
    x = x0.copy()
    f = fn(x)
    if not np.isfinite(f):
        raise FitError("infeasible starting point for mode search")
    dim = x.shape[0]
    Hinv = np.eye(dim)
    g = _fd_gradient(fn, x)
    for _ in range(max_iters):
        if np.abs(g).max() <= tol * (1.0 + abs(f)):
            break
        direction = Hinv @ g
        if direction @ g <= 0:
            Hinv = np.eye(dim)
            direction = g
        alpha, accepted = 1.0, False
        while alpha > 1e-14:
            x_new = x + alpha * direction
            f_new = fn(x_new)
            if np.isfinite(f_new) and f_new > f + 1e-4 * alpha * (direction @ g):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        g_new = _fd_gradient(fn, x_new)
        s = x_new - x
        yk = g_new - g
        sy = s @ yk
        if sy < -1e-12 * np.linalg.norm(s) * np.linalg.norm(yk):
            # BFGS update on the negated (convex) problem; sy < 0 is the
            # curvature condition for ascent
            rho = 1.0 / sy
            I = np.eye(dim)
            Hinv = (I - rho * np.outer(s, yk)) @ Hinv @ \
                (I - rho * np.outer(yk, s)) - rho * np.outer(s, s)
        x, f, g = x_new, f_new, g_new
    return x


def find_mode(target, start: np.ndarray,
              cfg: MhConfig = MhConfig()) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mode and inverse negated finite-difference Hessian.

    Runs the configured number of perturbed restarts and keeps the best
    mode.  The Hessian is symmetrized and eigenvalue-floored before
    inversion; a non-negative-definite result raises a conditioning
    error with the offending spectrum attached.
    """
    fn = target.log_posterior
    start = np.asarray(start, dtype=float).reshape(-1)
    if not np.isfinite(fn(start)):
        found = False
        rng = np.random.default_rng(cfg.seed)
        for scale in (1e-3, 1e-2, 1e-1):
            for _ in range(10):
                cand = start + scale * (1 + np.abs(start)) * rng.standard_normal(start.shape)
                if np.isfinite(fn(cand)):
                    start, found = cand, True
                    break
            if found:
                break
        if not found:
            raise FitError("no feasible starting point found for mode search")

    best_x, best_f = None, -np.inf
    rng = np.random.default_rng(cfg.seed)
    for r in range(max(1, cfg.mode_restarts)):
        x0 = start if r == 0 else \
            start + 0.05 * (1 + np.abs(start)) * rng.standard_normal(start.shape)
        if not np.isfinite(fn(x0)):
            continue
        x = _ascend(fn, x0, cfg.mode_tol, cfg.mode_max_iters)
        f = fn(x)
        if f > best_f:
            best_x, best_f = x, f
    if best_x is None:
        raise FitError("mode search failed from all starts")

    H = _fd_hessian(fn, best_x)
    negH = -H
    eigval, eigvec = np.linalg.eigh(negH)
    if eigval.max() <= 0:
        raise FitError(
            f"posterior Hessian is not negative definite at the mode; "
            f"eigenvalues of -H: {eigval}"
        )
    floor = 1e-10 * eigval.max()
    eigval = np.maximum(eigval, floor)
    V = (eigvec / eigval) @ eigvec.T
    V = 0.5 * (V + V.T)
    return best_x, V


def _proposal(mode: np.ndarray, V: np.ndarray, df: float):
    return multivariate_t(loc=mode, shape=V, df=df)


def run_mh(target, cfg: MhConfig, start: np.ndarray | None = None,
           mode: np.ndarray | None = None,
           V: np.ndarray | None = None) -> Chain:
    """Tailored independence MH chain for the given target density.

    Fully deterministic given (target data, config): all randomness
    comes from a generator seeded with ``cfg.seed``.
    """
    if mode is None or V is None:
        if start is None:
            raise FitError("run_mh needs either (mode, V) or a start point")
        mode, V = find_mode(target, start, cfg)
    mode = np.asarray(mode, dtype=float).reshape(-1)
    prop = _proposal(mode, V, cfg.proposal_df)
    rng = np.random.default_rng(cfg.seed)

    current = mode.copy()
    lp_cur = target.log_posterior(current)
    if not np.isfinite(lp_cur):
        raise FitError("posterior mode is infeasible")
    logq_cur = float(prop.logpdf(current))

    total = cfg.n_burn + cfg.n_draws
    dim = mode.shape[0]
    draws = np.empty((cfg.n_draws, dim))
    log_post_trace = np.empty(cfg.n_draws)
    n_accept_post = 0

    # all proposal randomness is drawn up front in one batch; the
    # acceptance loop then only evaluates the target
    cands = np.atleast_2d(prop.rvs(size=total, random_state=rng))
    cands = cands.reshape(total, dim)
    log_us = np.log(rng.uniform(size=total))
    logq_cands = np.atleast_1d(prop.logpdf(cands))

    for it in range(total):
        lp_cand = target.log_posterior(cands[it])
        accepted = False
        if np.isfinite(lp_cand):
            logq_cand = float(logq_cands[it])
            log_alpha = (lp_cand - lp_cur) + (logq_cur - logq_cand)
            if log_us[it] < log_alpha:
                current = cands[it]
                lp_cur, logq_cur = lp_cand, logq_cand
                accepted = True
        if it >= cfg.n_burn:
            j = it - cfg.n_burn
            draws[j] = current
            log_post_trace[j] = lp_cur
            if accepted:
                n_accept_post += 1

    accept_rate = n_accept_post / cfg.n_draws
    if accept_rate < 0.01:
        warnings.warn(
            f"MH acceptance rate {accept_rate:.4f} is below 1%; the "
            "proposal may be poorly matched to the posterior",
            stacklevel=2,
        )
    return Chain(draws, log_post_trace, accept_rate, mode, V, cfg.proposal_df)


def gmm_start(model: MomentModel, ds: Dataset) -> np.ndarray:
    """Default mode-search start: the full-sample two-step GMM estimate."""
    from .gmm import two_step_gmm

    return two_step_gmm(model, ds).estimate.flat()
