"""Posterior summaries, new-study predictions and DP cluster reports."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import FitResult
from ..distributions import SkewNormalParams, sample_sn, sn_moments_array
from .diagnostics import rhat
from .mcmc import PosteriorDraws

__all__ = [
    "interval",
    "Predictive",
    "predictive_new_study",
    "ClusterSummary",
    "dp_cluster_summary",
    "summarize_posterior",
]


def interval(x, level=0.95, axis=0):
    """Equal-tailed credible interval from draws (linear-interpolated quantiles)."""
    a = 0.5 * (1.0 - level)
    return np.quantile(np.asarray(x, dtype=float), [a, 1.0 - a], axis=axis)


@dataclass
class Predictive:
    lo: float
    hi: float
    prob_negative: float
    draws: np.ndarray


def predictive_new_study(draws: PosteriorDraws, rng=None, level=0.95) -> Predictive:
    """Sample one new-study effect per retained draw from that draw's random-effects law.

    DP models pick an atom per draw with the stick weights as probabilities.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    fam = draws.family
    if fam == "normal":
        mu, tau = draws.flat("mu"), draws.flat("tau")
        new = mu + tau * rng.standard_normal(mu.size)
    elif fam == "t":
        mu, om, nu = draws.flat("mu"), draws.flat("omega"), draws.flat("nu")
        new = mu + om * rng.standard_t(nu)
    elif fam == "skew-normal":
        p = SkewNormalParams(draws.flat("xi"), draws.flat("omega"), draws.flat("gamma"))
        new = sample_sn(p, rng, size=p.xi.size)
    elif fam == "dp-points":
        w, atoms = draws.flat("p"), draws.flat("atoms")
        u = rng.random(w.shape[0])
        cum = np.cumsum(w, axis=1)
        j = np.minimum((cum < (u * cum[:, -1])[:, None]).sum(axis=1), w.shape[1] - 1)
        new = atoms[np.arange(w.shape[0]), j]
    else:  # pragma: no cover
        raise ValueError(fam)
    new = np.asarray(new, dtype=float)
    lo, hi = interval(new, level)
    return Predictive(float(lo), float(hi), float(np.mean(new < 0)), new)


@dataclass
class ClusterSummary:
    """Cluster structure after relabelling occupied atoms by location within each draw.

    ``new_study_probs`` has one entry per relabelled cluster plus a final entry
    for the weight on atoms no study occupies.
    """

    n_clusters_mode: int
    n_clusters_probs: dict[int, float]
    modal_cluster: np.ndarray
    assignment_prob: np.ndarray
    cluster_means: np.ndarray
    new_study_probs: np.ndarray

    @property
    def occupied_modal_labels(self) -> np.ndarray:
        return np.unique(self.modal_cluster)

    def to_dict(self) -> dict:
        return {
            "n_clusters_mode": self.n_clusters_mode,
            "n_clusters_probs": {str(k): v for k, v in self.n_clusters_probs.items()},
            "modal_cluster": self.modal_cluster.tolist(),
            "assignment_prob": self.assignment_prob.tolist(),
            "cluster_means": self.cluster_means.tolist(),
            "new_study_probs": self.new_study_probs.tolist(),
        }


def relabel(z, atoms):
    """Map each draw's occupied atoms to ranks 0..k-1 by ascending location.

    Returns the relabelled assignments and the per-draw number of occupied atoms.
    """
    z = np.asarray(z)
    n_draws, N = atoms.shape
    occ = np.zeros((n_draws, N), dtype=bool)
    occ[np.arange(n_draws)[:, None], z] = True
    loc = np.where(occ, atoms, np.inf)
    order = np.argsort(loc, axis=1, kind="stable")
    rank = np.empty_like(order)
    rank[np.arange(n_draws)[:, None], order] = np.arange(N)[None, :]
    labels = np.take_along_axis(rank, z.astype(np.intp), axis=1)
    return labels, occ.sum(axis=1), occ, rank


def dp_cluster_summary(draws: PosteriorDraws) -> ClusterSummary:
    """Per-study cluster membership after relabelling on atom location.

    Draws with the modal number of occupied clusters are relabelled by
    ascending atom location and define reference cluster centres.  Every
    draw's occupied atoms are then mapped to the nearest centre, so a cluster
    that briefly splits into two nearby atoms keeps one label instead of
    shifting the ranks of all clusters above it.
    """
    if draws.family != "dp-points":
        raise ValueError("cluster summaries need Dirichlet-process draws")
    z = draws.flat("z").astype(np.intp)
    atoms = draws.flat("atoms")
    w = draws.flat("p")
    labels, k, occ, rank = relabel(z, atoms)
    n_draws, n = labels.shape
    ks, counts = np.unique(k, return_counts=True)
    k_probs = {int(a): float(b) / n_draws for a, b in zip(ks, counts)}
    k_mode = int(ks[np.argmax(counts)])

    ref = occ & (k == k_mode)[:, None]
    centres = np.array([atoms[ref & (rank == j)].mean() for j in range(k_mode)])
    nearest = np.argmin(np.abs(atoms[:, :, None] - centres[None, None, :]), axis=2)
    mapped = np.take_along_axis(nearest, z, axis=1)

    freq = np.zeros((n, k_mode))
    np.add.at(freq, (np.broadcast_to(np.arange(n), (n_draws, n)), mapped), 1.0)
    freq /= n_draws
    modal = np.argmax(freq, axis=1)
    prob = freq[np.arange(n), modal]

    means = np.empty(k_mode)
    new_probs = np.zeros(k_mode + 1)
    for j in range(k_mode):
        hit = occ & (nearest == j)
        means[j] = float(atoms[hit].mean()) if hit.any() else centres[j]
        new_probs[j] = float(w[hit].sum()) / n_draws
    new_probs[k_mode] = float(w[~occ].sum()) / n_draws
    new_probs /= new_probs.sum()
    return ClusterSummary(k_mode, k_probs, modal, prob, means, new_probs)


def _point(x):
    x = np.asarray(x, dtype=float)
    lo, hi = interval(x)
    return float(x.mean()), (float(lo), float(hi))


def summarize_posterior(
    draws: PosteriorDraws,
    spec=None,
    rng=None,
    rhat_threshold: float = 1.05,
) -> FitResult:
    """Posterior means with equal-tailed 95% intervals for mu, tau2 and study effects.

    Skew-normal and t models report the implied mean and variance per draw;
    DP models report the mixture moments per draw.  ``spec`` (a ModelSpec) is
    only used for the model id when given.
    """
    model_id = spec.model_id if spec is not None else draws.model_id
    fam = draws.family
    report = rhat(draws, rhat_threshold)
    mu, mu_ci = _point(draws.flat("mu"))
    tau2, tau2_ci = _point(draws.flat("tau2"))
    theta = draws.flat("theta")
    theta_hat = theta.mean(axis=0)
    theta_ci = interval(theta).T

    extras: dict = {"prob_mu_negative": float(np.mean(draws.flat("mu") < 0))}
    if fam == "t":
        for k in ("nu", "omega"):
            extras[k], extras[f"{k}_ci"] = _point(draws.flat(k))
    elif fam == "skew-normal":
        for k in ("xi", "omega", "gamma"):
            extras[k], extras[f"{k}_ci"] = _point(draws.flat(k))
        a = sn_moments_array(draws.flat("xi"), draws.flat("omega"), draws.flat("gamma"))[2]
        extras["skewness"], extras["skewness_ci"] = _point(a)
    elif fam == "dp-points":
        extras["alpha"], extras["alpha_ci"] = _point(draws.flat("alpha"))
        extras["mu_b"], extras["mu_b_ci"] = _point(draws.flat("mu_b"))
        extras["tau_b2"], extras["tau_b2_ci"] = _point(draws.flat("tau_b") ** 2)
        if not draws.failed:
            extras["clusters"] = dp_cluster_summary(draws).to_dict()
    pred = predictive_new_study(draws, rng)
    extras["prediction_interval"] = (pred.lo, pred.hi)
    extras["prob_theta_new_negative"] = pred.prob_negative

    notes = list(draws.messages)
    converged = report.converged and not draws.failed
    if not converged and not draws.failed:
        notes.append(f"max R-hat over {list(report.gate)} is {report.max_gate:.3f}")
    return FitResult(
        model_id=model_id,
        mu=mu,
        mu_ci=mu_ci,
        tau2=max(tau2, 0.0),
        tau2_ci=(max(tau2_ci[0], 0.0), tau2_ci[1]),
        theta=theta_hat,
        theta_ci=theta_ci,
        study_ids=list(draws.study_ids),
        extras=extras,
        converged=converged,
        diagnostics={
            "rhat_max": report.max_gate,
            "rhat": {k: v for k, v in report.values.items() if k in report.gate},
            "n_chains": draws.n_chains,
            "n_draws": draws.n_draws,
            "accept_rates": draws.accept_rates,
        },
        notes=notes,
    )
