"""Command-line pipeline: simulate | fit | test-endogeneity | select | mc | gmm-msc.

Configuration is JSON, tabular output is CSV, structured reports are
JSON.  All primary outputs are byte-identical across reruns with the
same config and seed; timestamps appear only in the sidecar run log.

Exit codes: 0 success, 1 numeric/pipeline failure, 2 configuration
error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from .data import CsvSchema, Dataset, SplitSpec, load_csv, save_csv, split_train
from .evidence import (chib_jeliazkov_log_ml, fit_model, mask_name,
                       prior_feasibility_mass, test_endogeneity)
from .exceptions import ConfigError, EtivError, EvidenceError, FitError
from .gmm import msc_criteria, two_step_gmm
from .moments import MomentModel
from .posterior import MhConfig
from .priors import PriorSpec, build_training_prior
from .simulate import (DgpConfig, McGrid, QuadraticDgp, TwoRegressorDgp,
                       generate_dataset, generate_quadratic_dataset,
                       generate_two_regressor_dataset, run_mc)

QUICK_BURN = 200
QUICK_DRAWS = 2000


def _load_config(args) -> dict:
    if args.config is None:
        raise ConfigError("--config PATH is required")
    path = Path(args.config)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc


def _out_dir(args, cfg: dict) -> Path:
    out = args.out or cfg.get("out", ".")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _log(out: Path, message: str) -> None:
    stamp = time.strftime("%Y-%m-%dT%H:%M:%S")
    with open(out / "run.log", "a", encoding="utf-8") as fh:
        fh.write(f"{stamp} {message}\n")


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _dgp_from_config(cfg: dict, seed_override=None) -> tuple[str, object]:
    """Returns (kind, config object) for the requested generator."""
    dgp = dict(cfg)
    recipe = dgp.pop("recipe", "main")
    if seed_override is not None:
        dgp["seed"] = seed_override
    if recipe == "main":
        return recipe, DgpConfig(**dgp)
    if recipe == "two_regressor":
        return recipe, TwoRegressorDgp(**dgp)
    if recipe == "quadratic":
        return recipe, QuadraticDgp(**dgp)
    raise ConfigError(f"unknown DGP recipe {recipe!r}")


def _generate(kind: str, dgp) -> Dataset:
    if kind == "main":
        return generate_dataset(dgp)
    if kind == "two_regressor":
        return generate_two_regressor_dataset(dgp)
    return generate_quadratic_dataset(dgp)


def _load_dataset(cfg: dict, args) -> Dataset:
    src = cfg.get("dataset")
    if src is None:
        raise ConfigError("config needs a 'dataset' section")
    if "path" in src:
        path = Path(src["path"])
        if not path.exists():
            raise ConfigError(f"dataset file not found: {path}")
        if "schema" not in src:
            raise ConfigError("dataset.path requires dataset.schema")
        return load_csv(path, CsvSchema.from_dict(src["schema"]))
    if "dgp" in src:
        kind, dgp = _dgp_from_config(src["dgp"], seed_override=args.seed)
        return _generate(kind, dgp)
    raise ConfigError("dataset section needs either 'path' or 'dgp'")


def _mh_config(cfg: dict, args) -> MhConfig:
    mh = dict(cfg.get("mh", {}))
    if args.quick:
        mh["n_burn"] = QUICK_BURN
        mh["n_draws"] = QUICK_DRAWS
    if args.seed is not None:
        mh["seed"] = args.seed
    return MhConfig(**mh)


def _prior_pipeline(cfg: dict, ds: Dataset):
    """Returns (spec_builder(model, ds) -> PriorSpec, estimation dataset).

    Recipes: 'gmm' (default) centers the prior at a full-sample GMM fit;
    'training' splits off a training fraction, builds the prior there and
    fits on the remainder; 'explicit' reads a PriorSpec verbatim.
    """
    prior = dict(cfg.get("prior", {}))
    recipe = prior.pop("recipe", "gmm")
    if recipe == "explicit":
        spec = PriorSpec.from_dict(prior["spec"])

        def builder(model, data, _spec=spec):
            return _spec
        return builder, ds
    if recipe == "training":
        split = SplitSpec(prior.pop("train_fraction", 0.15),
                          prior.pop("split_seed", 0))
        train, est = split_train(ds, split)

        def builder(model, data, _train=train, _kw=prior):
            return build_training_prior(_train, model, **_kw)
        return builder, est
    if recipe == "gmm":
        def builder(model, data, _kw=prior):
            return build_training_prior(data, model, **_kw)
        return builder, ds
    raise ConfigError(f"unknown prior recipe {recipe!r}")


def _model_from_config(ds: Dataset, entry: dict) -> MomentModel:
    return MomentModel.for_dataset(
        ds,
        v_mask=entry.get("v_mask"),
        beta_zero=entry.get("beta_zero"),
    )


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    kind, dgp = _dgp_from_config(cfg.get("dgp", cfg.get("dataset", {}).get("dgp", {})),
                                 seed_override=args.seed)
    ds = _generate(kind, dgp)
    path = out / cfg.get("filename", "dataset.csv")
    save_csv(ds, path)
    _log(out, f"simulate: wrote {ds.n} rows to {path}")
    print(f"wrote {ds.n} rows to {path}")
    return 0


def cmd_fit(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    ds = _load_dataset(cfg, args)
    mh = _mh_config(cfg, args)
    builder, est_ds = _prior_pipeline(cfg, ds)
    model = _model_from_config(est_ds, cfg.get("model", {}))
    prior = builder(model, est_ds)
    chain, est = fit_model(model, est_ds, prior, mh)

    evid = dict(cfg.get("evidence", {}))
    report = {
        "model": {"v_mask": list(model.v_mask),
                  "beta_zero": list(model.beta_zero)},
        "param_names": model.param_names(),
        "mode": chain.mode.tolist(),
        "posterior_mean": chain.posterior_mean().tolist(),
        "posterior_sd": chain.posterior_sd().tolist(),
        "credible_95": chain.credible_interval(0.95).tolist(),
        "accept_rate": chain.accept_rate,
        "ess": chain.ess_batch_means().tolist(),
        "evidence": est.to_dict(),
        "prior": prior.to_dict(),
        "n": est_ds.n,
    }
    if evid.get("normalized_prior", False):
        mass = prior_feasibility_mass(model, est_ds, prior,
                                      B=evid.get("p_hat_draws", 1000),
                                      seed=mh.seed + 2)
        report["prior_feasibility"] = mass
        if mass["p_hat"] > 0:
            report["log_ml_normalized"] = est.log_ml - float(np.log(mass["p_hat"]))
    _write_json(out / "fit.json", report)
    chain.to_csv(out / "chain.csv", names=model.param_names())
    _log(out, f"fit: accept={chain.accept_rate:.3f} log_ml={est.log_ml:.4f}")
    print(f"log_ml={est.log_ml:.4f} accept_rate={chain.accept_rate:.3f}")
    return 0


def cmd_test(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    ds = _load_dataset(cfg, args)
    mh = _mh_config(cfg, args)
    builder, est_ds = _prior_pipeline(cfg, ds)
    base = _model_from_config(est_ds, cfg.get("model", {}))
    spec_b = builder(base.base(), est_ds)
    spec_e = builder(base.extended(), est_ds)
    result = test_endogeneity(est_ds, spec_b, spec_e, mh, base_model=base)
    _write_json(out / "test.json", result)
    _log(out, f"test-endogeneity: {result['verdict']}")
    print(f"verdict={result['verdict']} log_bf_eb={result['log_bf_eb']:.4f}")
    return 0


def cmd_select(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    ds = _load_dataset(cfg, args)
    mh = _mh_config(cfg, args)
    builder, est_ds = _prior_pipeline(cfg, ds)

    if "models" in cfg:
        entries = cfg["models"]
        names, masks, log_mls, mc_ses = [], [], [], []
        failures = {}
        for entry in entries:
            model = _model_from_config(est_ds, entry)
            name = entry.get("name", mask_name(model.v_mask))
            try:
                prior = builder(model, est_ds)
                _, est = fit_model(model, est_ds, prior, mh)
            except (FitError, EvidenceError) as exc:
                failures[name] = str(exc)
                continue
            names.append(name)
            masks.append(model.v_mask)
            log_mls.append(est.log_ml)
            mc_ses.append(est.mc_se)
        if not names:
            raise FitError("all candidate models failed")
        from .evidence import ComparisonReport
        report = ComparisonReport(masks, names, log_mls, mc_ses, failures)
    else:
        from .evidence import select_models
        masks = [tuple(m) for m in cfg.get(
            "masks", _all_masks(est_ds.d_x))]
        base_model = _model_from_config(est_ds, cfg.get("model", {}))
        report = select_models(est_ds, masks, builder, mh,
                               base_model=base_model)

    _write_json(out / "select.json", report.to_dict())
    with open(out / "select.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["name", "mask", "log_ml", "mc_se"])
        for i, name in enumerate(report.names):
            writer.writerow([name,
                             "".join("1" if b else "0" for b in report.masks[i]),
                             repr(report.log_mls[i]), repr(report.mc_ses[i])])
    _log(out, f"select: winner={report.winner}")
    print(f"winner={report.winner}")
    return 0


def _all_masks(d_x: int) -> list[tuple[bool, ...]]:
    return [tuple(bool((m >> j) & 1) for j in range(d_x))
            for m in range(2 ** d_x)]


def cmd_mc(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    mc = dict(cfg.get("mc", {}))
    if args.jobs is not None:
        mc["jobs"] = args.jobs
    if args.seed is not None:
        mc["base_seed"] = args.seed
    grid = McGrid(rhos=tuple(mc.pop("rhos")), ns=tuple(mc.pop("ns")), **mc)
    mh_kwargs = dict(cfg.get("mh", {}))
    if args.quick:
        mh_kwargs["n_burn"] = QUICK_BURN
        mh_kwargs["n_draws"] = QUICK_DRAWS
    table = run_mc(grid, mh_kwargs=mh_kwargs,
                   prior_kwargs=cfg.get("prior_kwargs", {}))
    path = out / "mc.csv"
    cols = ["rho", "n", "reps", "extended_wins", "failures",
            "mean_log_bf", "wall_time_s"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for row in table:
            # wall time is not deterministic; keep it out of the primary CSV
            writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c]
                             for c in cols[:-1]] + ["0"])
    _log(out, "mc: " + "; ".join(
        f"rho={r['rho']} n={r['n']} wins={r['extended_wins']}"
        f" wall={r['wall_time_s']:.1f}s" for r in table))
    print(f"wrote {len(table)} cells to {path}")
    return 0


def cmd_gmm_msc(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    ds = _load_dataset(cfg, args)
    base = _model_from_config(ds, cfg.get("model", {}))
    masks = [tuple(m) for m in cfg.get("masks", _all_masks(ds.d_x))]
    fits = {}
    for mask in masks:
        model = base.with_mask(mask)
        fits[mask_name(mask)] = two_step_gmm(model, ds)
    report = msc_criteria(fits, ds.n_blocks())
    with open(out / "gmm_msc.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", "J", "df", "gmm_bic", "gmm_aic", "gmm_hqic"])
        for row in report.rows():
            writer.writerow([row["model"], repr(row["J"]), row["df"],
                             repr(row["gmm_bic"]), repr(row["gmm_aic"]),
                             repr(row["gmm_hqic"])])
    _write_json(out / "gmm_msc.json",
                {"rows": report.rows(), "selected": report.selected})
    _log(out, f"gmm-msc: selected={report.selected}")
    print(f"selected: {report.selected}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="etiv",
        description="Moment-based Bayesian endogeneity testing for linear "
                    "IV regression",
    )
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--jobs", type=int, default=None,
                        help="parallel replications for mc")
    parser.add_argument("--quick", action="store_true",
                        help="short chains (burn 200, draws 2000)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("simulate", cmd_simulate), ("fit", cmd_fit),
                     ("test-endogeneity", cmd_test), ("select", cmd_select),
                     ("mc", cmd_mc), ("gmm-msc", cmd_gmm_msc)):
        p = sub.add_parser(name)
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except EtivError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
