"""Bayesian models, the MCMC engine, diagnostics and posterior summaries."""

from .diagnostics import RhatReport, ess, mc_se, rhat, split_rhat
from .mcmc import DESK_CONFIG, McmcConfig, PosteriorDraws, dp_moments, run_mcmc
from .models import ModelInstance, build_model
from .summary import (
    ClusterSummary,
    Predictive,
    dp_cluster_summary,
    interval,
    predictive_new_study,
    summarize_posterior,
)

__all__ = [
    "McmcConfig",
    "DESK_CONFIG",
    "PosteriorDraws",
    "run_mcmc",
    "dp_moments",
    "ModelInstance",
    "build_model",
    "rhat",
    "split_rhat",
    "ess",
    "mc_se",
    "RhatReport",
    "summarize_posterior",
    "predictive_new_study",
    "dp_cluster_summary",
    "interval",
    "ClusterSummary",
    "Predictive",
]
