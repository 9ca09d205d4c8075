"""One entry point that fits any registered model to an arm-level dataset."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .bayes import DESK_CONFIG, McmcConfig, build_model, run_mcmc, summarize_posterior
from .core import FitResult, MetaDataset, compute_effects, get_model_spec
from .freq import fit_binomial_normal_ml, fit_common_mean_mixture, fit_normal_t, fit_reml

__all__ = ["fit_model"]

_FREQ = {
    "normal-normal(REML)": fit_reml,
    "normal-t": fit_normal_t,
    "normal-common-mean-mixture": fit_common_mean_mixture,
}


def _split_rngs(rng, n_chains):
    """Chain generators plus one generator for posterior predictive sampling."""
    if rng is None or isinstance(rng, (int, np.integer)):
        ss = np.random.SeedSequence(rng)
        gens = [np.random.default_rng(s) for s in ss.spawn(n_chains + 1)]
    elif isinstance(rng, np.random.Generator):
        gens = list(rng.spawn(n_chains + 1))
    else:
        gens = list(rng)
        if len(gens) == n_chains:
            gens.append(np.random.default_rng(0))
        if len(gens) != n_chains + 1:
            raise ValueError(f"expected {n_chains} or {n_chains + 1} generators, got {len(gens)}")
    return gens[:n_chains], gens[n_chains]


def fit_model(
    model_id: str,
    data: MetaDataset,
    *,
    cc: float = 0.5,
    mcmc: McmcConfig | None = None,
    rng: np.random.Generator | Sequence[np.random.Generator] | int | None = None,
    seed: int = 0,
) -> FitResult:
    """Fit ``model_id`` to arm-level data.

    Normal-approximation models see log odds ratios built with continuity
    correction ``cc``.  Bayesian models run ``mcmc`` (desk defaults when
    omitted) with chain streams taken from ``rng``; ``seed`` only seeds the
    EM restarts of the mixture model.
    """
    spec = get_model_spec(model_id)
    if spec.is_bayesian:
        cfg = mcmc or DESK_CONFIG
        chains, pred_rng = _split_rngs(rng, cfg.n_chains)
        m = build_model(spec, data)
        draws = run_mcmc(m, cfg, chains)
        fit = summarize_posterior(draws, spec, pred_rng, cfg.rhat_threshold)
        fit.diagnostics["n_iter"] = cfg.n_iter
        fit.diagnostics["burn_in"] = cfg.burn_in
        return fit
    if spec.model_id == "binomial-normal(ML)":
        return fit_binomial_normal_ml(data)
    effects = compute_effects(data, cc=cc)
    if spec.model_id == "normal-common-mean-mixture":
        return fit_common_mean_mixture(effects, seed=seed)
    return _FREQ[spec.model_id](effects)
