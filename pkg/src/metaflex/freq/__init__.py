"""Frequentist fitters: REML, binomial-normal ML, normal-t ML and the common-mean mixture."""

from .binomial_ml import fit_binomial_normal_ml
from .mixture import CommonMeanMixtureResult, em_common_mean, fit_common_mean_mixture
from .normal_t import convolution_logpdf, fit_normal_t
from .reml import fit_reml, q_profile_ci, reml_tau2, restricted_loglik

__all__ = [
    "fit_reml",
    "reml_tau2",
    "restricted_loglik",
    "q_profile_ci",
    "fit_binomial_normal_ml",
    "fit_normal_t",
    "convolution_logpdf",
    "fit_common_mean_mixture",
    "em_common_mean",
    "CommonMeanMixtureResult",
]
