"""Moment-based Bayesian endogeneity testing for linear IV regression."""

from .data import (CsvSchema, Dataset, SplitSpec, load_csv, save_csv,
                   split_train)
from .evidence import (ComparisonReport, EvidenceEstimate,
                       chib_jeliazkov_log_ml, fit_model, mask_name,
                       prior_feasibility_mass, select_models,
                       test_endogeneity)
from .exceptions import (ConfigError, DataError, EtivError, EvidenceError,
                         FitError, IdentificationError, ParseError,
                         SchemaError)
from .gmm import GmmFit, MscReport, msc_criteria, two_sls, two_step_gmm
from .moments import (MomentModel, ParamVector, instrument_matrix,
                      moment_jacobian, moment_matrix, moment_row,
                      regressor_matrix, residual, residuals)
from .posterior import (Chain, EtelTarget, MhConfig, find_mode, gmm_start,
                        log_posterior, run_mh)
from .priors import PriorSpec, build_training_prior, log_prior
from .simulate import (DgpConfig, McGrid, MixtureMargin, QuadraticDgp,
                       TwoRegressorDgp, generate_dataset,
                       generate_quadratic_dataset,
                       generate_two_regressor_dataset, mixture_inverse_cdf,
                       run_mc)
from .tilt import (TiltConfig, TiltSolution, log_etel_identity_check,
                   primal_feasible, primal_oracle, solve_tilt)

__version__ = "0.1.0"

__all__ = [
    "CsvSchema", "Dataset", "SplitSpec", "load_csv", "save_csv",
    "split_train",
    "ComparisonReport", "EvidenceEstimate", "chib_jeliazkov_log_ml",
    "fit_model", "mask_name", "prior_feasibility_mass", "select_models",
    "test_endogeneity",
    "ConfigError", "DataError", "EtivError", "EvidenceError", "FitError",
    "IdentificationError", "ParseError", "SchemaError",
    "GmmFit", "MscReport", "msc_criteria", "two_sls", "two_step_gmm",
    "MomentModel", "ParamVector", "instrument_matrix", "moment_jacobian",
    "moment_matrix", "moment_row", "regressor_matrix", "residual",
    "residuals",
    "Chain", "EtelTarget", "MhConfig", "find_mode", "gmm_start",
    "log_posterior", "run_mh",
    "PriorSpec", "build_training_prior", "log_prior",
    "DgpConfig", "McGrid", "MixtureMargin", "QuadraticDgp",
    "TwoRegressorDgp", "generate_dataset", "generate_quadratic_dataset",
    "generate_two_regressor_dataset", "mixture_inverse_cdf", "run_mc",
    "TiltConfig", "TiltSolution", "log_etel_identity_check",
    "primal_feasible", "primal_oracle", "solve_tilt",
]
