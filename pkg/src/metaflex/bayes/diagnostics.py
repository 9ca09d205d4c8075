"""Convergence diagnostics: split-chain R-hat and effective sample size."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mcmc import PosteriorDraws

__all__ = ["RhatReport", "split_rhat", "rhat", "ess", "mc_se"]


@dataclass
class RhatReport:
    values: dict[str, float]
    gate: tuple[str, ...]
    max_gate: float
    threshold: float

    @property
    def converged(self) -> bool:
        return bool(np.isfinite(self.max_gate) and self.max_gate < self.threshold)


def split_rhat(chains) -> float:
    """Split-chain Gelman-Rubin statistic for a ``(chains, draws)`` array.

    Each chain is cut in half, so a chain that drifts during sampling inflates
    the statistic even when only one chain is run.
    """
    x = np.asarray(chains, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    n = x.shape[1] // 2
    if n < 5:
        raise ValueError("need at least 10 retained draws per chain")
    halves = np.concatenate([x[:, :n], x[:, x.shape[1] - n:]], axis=0)
    if not np.all(np.isfinite(halves)):
        return float("nan")
    means = halves.mean(axis=1)
    within = halves.var(axis=1, ddof=1).mean()
    between = n * means.var(ddof=1)
    if within <= 0:
        # constant chains: identical constants agree, different ones do not
        return 1.0 if between <= 0 else float("inf")
    var_plus = (n - 1) / n * within + between / n
    return float(np.sqrt(var_plus / within))


def rhat(draws: PosteriorDraws, threshold: float = 1.05) -> RhatReport:
    """R-hat for every scalar monitored quantity plus the maximum over the gate set."""
    values = {}
    for name, arr in draws.samples.items():
        if arr.ndim == 2 and np.issubdtype(arr.dtype, np.floating):
            values[name] = split_rhat(arr)
    gated = [values[g] for g in draws.gate if g in values]
    max_gate = float(np.max(gated)) if gated else float("nan")
    if gated and np.any(np.isnan(gated)):
        max_gate = float("nan")
    return RhatReport(values, draws.gate, max_gate, threshold)


def _autocorr(x):
    n = x.size
    x = x - x.mean()
    f = np.fft.rfft(x, n=2 * n)
    acov = np.fft.irfft(f * np.conj(f))[:n] / n
    return acov / acov[0] if acov[0] > 0 else np.zeros(n)


def ess(chains) -> float:
    """Effective sample size with Geyer's initial positive sequence, pooled over chains."""
    x = np.asarray(chains, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    m, n = x.shape
    rho = np.mean([_autocorr(c) for c in x], axis=0)
    total = 0.0
    for t in range(0, n - 1, 2):
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        total += pair
    tau = max(2.0 * total - 1.0, 1.0 / (m * n))
    return float(m * n / tau)


def mc_se(chains) -> float:
    """Monte-Carlo standard error of the posterior mean."""
    x = np.asarray(chains, dtype=float)
    return float(x.std(ddof=1) / np.sqrt(ess(x)))
