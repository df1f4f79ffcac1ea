"""Marginal likelihood estimation and model comparison.

The log marginal likelihood is assembled from the exact identity
``log m = log-likelihood(point) + log-prior(point) - log posterior
ordinate(point)``, valid at any feasible point; we evaluate at the
posterior mode.  The posterior ordinate is estimated from the MH output
(acceptance-weighted proposal density averaged over chain draws) over
the average acceptance probability from the evaluation point against
fresh proposal draws.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .exceptions import EvidenceError, FitError
from .moments import MomentModel, ParamVector
from .posterior import Chain, EtelTarget, MhConfig, _proposal, find_mode, \
    gmm_start, run_mh
from .priors import PriorSpec


@dataclass(frozen=True)
class EvidenceEstimate:
    """Log marginal likelihood with its three components and an MC SE."""

    log_ml: float
    log_lik_at_star: float
    log_prior_at_star: float
    log_post_ordinate: float
    theta_star: np.ndarray
    mc_se: float
    n_chain: int
    n_proposal: int

    def to_dict(self) -> dict:
        return {
            "log_ml": self.log_ml,
            "log_lik_at_star": self.log_lik_at_star,
            "log_prior_at_star": self.log_prior_at_star,
            "log_post_ordinate": self.log_post_ordinate,
            "theta_star": self.theta_star.tolist(),
            "mc_se": self.mc_se,
            "n_chain": self.n_chain,
            "n_proposal": self.n_proposal,
        }


def _batch_mean_se(seq: np.ndarray, n_batches: int = 20) -> float:
    """Standard error of the mean of a dependent sequence via batch means."""
    m = seq.shape[0]
    b = m // n_batches
    if b < 1:
        return float(seq.std(ddof=1) / np.sqrt(max(m, 2)))
    batches = seq[: b * n_batches].reshape(n_batches, b).mean(axis=1)
    return float(batches.std(ddof=1) / np.sqrt(n_batches))


def chib_jeliazkov_log_ml(chain: Chain, target, J: int | None = None,
                          seed: int | None = None,
                          theta_star: np.ndarray | None = None) -> EvidenceEstimate:
    """Estimate the log marginal likelihood from MH output.

    ``J`` fresh draws from the Student-t proposal feed the ordinate
    denominator; infeasible draws contribute zero acceptance but still
    count in J.  The MC standard error combines 20 nonoverlapping batch
    means on the numerator with the independent-draw variance of the
    denominator by the delta method.
    """
    M = chain.draws.shape[0]
    if M == 0:
        raise EvidenceError("empty chain")
    if J is None:
        J = M
    if seed is None:
        seed = 0
    if theta_star is None:
        theta_star = chain.mode
    theta_star = np.asarray(theta_star, dtype=float).reshape(-1)

    prop = _proposal(chain.mode, chain.V, chain.proposal_df)
    lp_star = target.log_posterior(theta_star)
    if not np.isfinite(lp_star):
        raise EvidenceError("evaluation point is infeasible")
    logq_star = float(prop.logpdf(theta_star))

    # numerator: mean over chain draws of alpha(draw -> theta*)
    logq_draws = np.atleast_1d(prop.logpdf(chain.draws))
    log_alpha_num = np.minimum(
        0.0, (lp_star - chain.log_post) + (logq_draws - logq_star)
    )
    alpha_num = np.exp(log_alpha_num)
    num_mean = float(alpha_num.mean())

    # denominator: mean over fresh proposal draws of alpha(theta* -> draw)
    rng = np.random.default_rng(seed)
    fresh = np.atleast_2d(prop.rvs(size=J, random_state=rng))
    if fresh.shape != (J, theta_star.shape[0]):
        fresh = fresh.reshape(J, theta_star.shape[0])
    alpha_den = np.zeros(J)
    logq_fresh = np.atleast_1d(prop.logpdf(fresh))
    for j in range(J):
        lp_j = target.log_posterior(fresh[j])
        if np.isfinite(lp_j):
            alpha_den[j] = np.exp(
                min(0.0, (lp_j - lp_star) + (logq_star - logq_fresh[j]))
            )
    den_mean = float(alpha_den.mean())
    if den_mean <= 0:
        raise EvidenceError(
            "posterior ordinate denominator is zero: no proposal draw is "
            "accepted from the evaluation point"
        )

    log_ordinate = np.log(num_mean) + logq_star - np.log(den_mean)
    se_num = _batch_mean_se(alpha_num) / num_mean
    se_den = float(alpha_den.std(ddof=1) / np.sqrt(J)) / den_mean
    mc_se = float(np.hypot(se_num, se_den))

    log_lik_star = target.log_likelihood(theta_star)
    log_prior_star = target.log_prior(theta_star)
    log_ml = log_lik_star + log_prior_star - log_ordinate
    return EvidenceEstimate(float(log_ml), float(log_lik_star),
                            float(log_prior_star), float(log_ordinate),
                            theta_star, mc_se, M, J)


def fit_model(model: MomentModel, ds: Dataset, prior: PriorSpec,
              cfg: MhConfig, J: int | None = None) -> tuple[Chain, EvidenceEstimate]:
    """End-to-end single-model fit: mode, chain, evidence."""
    target = EtelTarget(model, ds, prior)
    start = gmm_start(model, ds)
    chain = run_mh(target, cfg, start=start)
    est = chib_jeliazkov_log_ml(chain, target, J=J, seed=cfg.seed + 1)
    return chain, est


def test_endogeneity(ds: Dataset, spec_b: PriorSpec, spec_e: PriorSpec,
                     cfg: MhConfig, base_model: MomentModel | None = None) -> dict:
    """Bayes-factor endogeneity test: extended vs base model.

    Verdict is ENDOGENOUS when the log Bayes factor of extended over
    base is >= 0, EXOGENOUS otherwise.
    """
    if base_model is None:
        base_model = MomentModel.for_dataset(ds)
    model_b = base_model.base()
    model_e = base_model.extended()
    try:
        _, est_b = fit_model(model_b, ds, spec_b, cfg)
    except FitError as exc:
        raise FitError(f"base model fit failed: {exc}") from exc
    try:
        _, est_e = fit_model(model_e, ds, spec_e, cfg)
    except FitError as exc:
        raise FitError(f"extended model fit failed: {exc}") from exc
    log_bf_eb = est_e.log_ml - est_b.log_ml
    return {
        "log_ml_b": est_b.log_ml,
        "log_ml_e": est_e.log_ml,
        "log_bf_eb": log_bf_eb,
        "mc_se_b": est_b.mc_se,
        "mc_se_e": est_e.mc_se,
        "verdict": "ENDOGENOUS" if log_bf_eb >= 0 else "EXOGENOUS",
    }


@dataclass
class ComparisonReport:
    """Per-mask evidence estimates, ranked."""

    masks: list[tuple[bool, ...]]
    names: list[str]
    log_mls: list[float]
    mc_ses: list[float]
    failures: dict[str, str] = field(default_factory=dict)

    @property
    def winner(self) -> str:
        order = self._ranking()
        return self.names[order[0]]

    def _ranking(self) -> list[int]:
        # ties (within 1e-9) break toward more zero-constrained v entries
        def key(i):
            return (-round(self.log_mls[i] / 1e-9),
                    sum(self.masks[i]))
        return sorted(range(len(self.names)), key=key)

    def log_bayes_factors_vs(self, ref_name: str) -> dict[str, float]:
        ref = self.log_mls[self.names.index(ref_name)]
        return {n: self.log_mls[i] - ref for i, n in enumerate(self.names)}

    def to_dict(self) -> dict:
        base = self.names[0]
        return {
            "models": [
                {
                    "name": self.names[i],
                    "mask": list(self.masks[i]),
                    "log_ml": self.log_mls[i],
                    "mc_se": self.mc_ses[i],
                }
                for i in range(len(self.names))
            ],
            "winner": self.winner,
            "log_bayes_factors_vs_first": self.log_bayes_factors_vs(base),
            "failures": self.failures,
        }


def mask_name(mask: tuple[bool, ...]) -> str:
    if not any(mask):
        return "base"
    if all(mask):
        return "extended"
    idx = "".join(str(j + 1) for j, b in enumerate(mask) if b)
    return f"endo_{idx}"


def select_models(ds: Dataset, masks: list[tuple[bool, ...]], spec_builder,
                  cfg: MhConfig, base_model: MomentModel | None = None,
                  names: list[str] | None = None) -> ComparisonReport:
    """Fit one model per mask and rank by log marginal likelihood.

    ``spec_builder(model, ds)`` returns the prior for each model, so a
    training-sample prior can be rebuilt model by model.  Per-model
    failures are recorded and excluded from the ranking.
    """
    if not masks:
        raise FitError("no masks supplied")
    if len({tuple(m) for m in masks}) != len(masks):
        raise FitError("duplicate masks supplied")
    if base_model is None:
        base_model = MomentModel.for_dataset(ds)
    if names is None:
        names = [mask_name(tuple(m)) for m in masks]

    ok_masks, ok_names, log_mls, mc_ses = [], [], [], []
    failures = {}
    for mask, name in zip(masks, names):
        model = base_model.with_mask(mask)
        try:
            prior = spec_builder(model, ds)
            _, est = fit_model(model, ds, prior, cfg)
        except (FitError, EvidenceError) as exc:
            warnings.warn(f"model {name} failed: {exc}", stacklevel=2)
            failures[name] = str(exc)
            continue
        ok_masks.append(tuple(mask))
        ok_names.append(name)
        log_mls.append(est.log_ml)
        mc_ses.append(est.mc_se)
    if not ok_names:
        raise FitError("all candidate models failed")
    return ComparisonReport(ok_masks, ok_names, log_mls, mc_ses, failures)


def prior_feasibility_mass(model: MomentModel, ds: Dataset, spec: PriorSpec,
                           B: int = 1000, seed: int = 0) -> dict:
    """Monte Carlo estimate of the prior mass on the feasibility set."""
    if B < 100:
        raise EvidenceError("need at least 100 prior draws")
    target = EtelTarget(model, ds, spec)
    rng = np.random.default_rng(seed)
    draws = spec.sample(rng, B)
    hits = sum(
        1 for b in range(B) if np.isfinite(target.log_likelihood(draws[b]))
    )
    p_hat = hits / B
    se = float(np.sqrt(p_hat * (1 - p_hat) / B))
    if p_hat == 0.0:
        warnings.warn(
            "no prior draw was feasible; the normalized-prior evidence "
            "is undefined",
            stacklevel=2,
        )
    return {"p_hat": p_hat, "se": se, "draws": B}
