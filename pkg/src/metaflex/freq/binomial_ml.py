"""Binomial-normal mixed logistic model fitted by maximum likelihood.

Control arms carry a fixed intercept per study; the treatment arm adds a
normal random effect.  Each study's marginal likelihood is integrated by
adaptive Gauss-Hermite quadrature centred at the conditional mode.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import optimize
from scipy.special import expit, log_expit, logsumexp, roots_hermite

from ..core import FitResult, MetaDataset, compute_effects, effect_arrays
from ._numdiff import jacobian, safe_inverse
from .reml import Z975, reml_tau2

LOG_TAU_BOUNDS = (-8.0, 3.0)


def _binom_ll(k, m, eta):
    return k * log_expit(eta) + (m - k) * log_expit(-eta)


def _mode(t, m, a, tau2, iters=50):
    """Mode of ``t*log s(eta) + (m-t)*log(1-s(eta)) - (eta-a)^2/(2 tau2)``."""
    eta = np.array(a, dtype=float)
    for _ in range(iters):
        p = expit(eta)
        g = t - m * p - (eta - a) / tau2
        h = -m * p * (1 - p) - 1.0 / tau2
        step = np.clip(-g / h, -2.0, 2.0)
        eta = eta + step
        if np.max(np.abs(step)) < 1e-12:
            break
    p = expit(eta)
    return eta, 1.0 / np.sqrt(m * p * (1 - p) + 1.0 / tau2)


def treatment_marginal(t, m, a, tau, n_nodes=15, with_grad=False):
    """``log int Bin(t | m, expit(eta)) N(eta; a, tau^2) d eta`` (binomial coefficient dropped).

    With ``with_grad`` also returns derivatives with respect to ``a`` and
    ``log tau`` computed as posterior expectations over the same nodes.
    """
    x, w = roots_hermite(n_nodes)
    tau2 = tau * tau
    mode, sd = _mode(t, m, a, tau2)
    eta = mode[:, None] + math.sqrt(2.0) * sd[:, None] * x[None, :]
    dev = eta - a[:, None]
    log_h = (
        _binom_ll(t[:, None], m[:, None], eta)
        - 0.5 * dev**2 / tau2
        - math.log(tau)
        - 0.5 * math.log(2 * math.pi)
    )
    terms = log_h + np.log(w) + x**2 + np.log(math.sqrt(2.0) * sd)[:, None]
    out = logsumexp(terms, axis=1)
    if not with_grad:
        return out
    post = np.exp(terms - out[:, None])
    d_a = (post * dev).sum(axis=1) / tau2
    d_logtau = (post * (dev**2 / tau2 - 1.0)).sum(axis=1)
    return out, d_a, d_logtau


class _Objective:
    def __init__(self, d: MetaDataset, n_nodes: int):
        self.t, self.mt, self.c, self.mc = d.arrays()
        self.n = self.t.size
        self.n_nodes = n_nodes

    def negll(self, par, with_grad=False):
        n = self.n
        zeta, mu, logtau = par[:n], par[n], par[n + 1]
        tau = math.exp(logtau)
        ctrl = _binom_ll(self.c, self.mc, zeta)
        if not with_grad:
            g = treatment_marginal(self.t, self.mt, zeta + mu, tau, self.n_nodes)
            return -(ctrl.sum() + g.sum())
        g, d_a, d_lt = treatment_marginal(self.t, self.mt, zeta + mu, tau, self.n_nodes, True)
        d_zeta = self.c - self.mc * expit(zeta) + d_a
        grad = np.concatenate([d_zeta, [d_a.sum(), d_lt.sum()]])
        return -(ctrl.sum() + g.sum()), -grad

    def grad(self, par):
        return self.negll(par, True)[1]


def _start(d: MetaDataset):
    t, mt, c, mc = d.arrays()
    zeta = np.log((c + 0.5) / (mc - c + 0.5))
    y, v = effect_arrays(compute_effects(d))
    tau2, _, _ = reml_tau2(y, v)
    w = 1.0 / (v + tau2)
    mu = float((w * y).sum() / w.sum())
    return np.concatenate([zeta, [mu, math.log(max(math.sqrt(tau2), 0.05))]])


def fit_binomial_normal_ml(d: MetaDataset, n_nodes: int = 15, model_id="binomial-normal(ML)") -> FitResult:
    """Joint ML over study intercepts, mu and log tau with Wald intervals."""
    if len(d) < 2:
        raise ValueError("need at least two studies")
    obj = _Objective(d, n_nodes)
    n = obj.n
    x0 = _start(d)
    bounds = [(None, None)] * (n + 1) + [LOG_TAU_BOUNDS]
    best = None
    notes = []
    for lt0 in (x0[-1], math.log(0.3), math.log(1.5)):
        start = x0.copy()
        start[-1] = lt0
        res = optimize.minimize(
            obj.negll, start, jac=obj.grad, method="L-BFGS-B", bounds=bounds,
            options={"maxiter": 2000, "ftol": 1e-15, "gtol": 1e-9},
        )
        if best is None or res.fun < best.fun - 1e-10:
            best = res
    par = best.x
    gnorm = float(np.max(np.abs(obj.grad(par)[: n + 1])))
    at_bound = par[-1] <= LOG_TAU_BOUNDS[0] + 1e-6
    converged = bool(best.success or gnorm < 1e-4) and np.isfinite(best.fun)
    if not converged:
        notes.append(f"optimizer did not converge: {best.message}")
    tau = math.exp(par[-1])
    tau2 = 0.0 if at_bound else tau * tau
    mu = float(par[n])

    free = n + 1 if at_bound else n + 2

    def grad_free(p):
        full = par.copy()
        full[:free] = p
        return obj.grad(full)[:free]

    cov = safe_inverse(jacobian(grad_free, par[:free]))
    mu_ci = tau2_ci = None
    extras = {"n_nodes": n_nodes}
    if cov is None:
        notes.append("observed information is singular; Wald intervals omitted")
    else:
        se_mu = math.sqrt(cov[n, n])
        mu_ci = (mu - Z975 * se_mu, mu + Z975 * se_mu)
        extras["mu_se"] = se_mu
        if not at_bound:
            se_lt = math.sqrt(cov[n + 1, n + 1])
            tau2_ci = (math.exp(2 * (par[-1] - Z975 * se_lt)), math.exp(2 * (par[-1] + Z975 * se_lt)))
    if at_bound:
        notes.append("tau at lower bound; reported as 0")
    return FitResult(
        model_id=model_id,
        mu=mu,
        mu_ci=mu_ci,
        tau2=tau2,
        tau2_ci=tau2_ci,
        study_ids=d.study_ids,
        extras=extras,
        converged=converged,
        diagnostics={"loglik": -float(best.fun), "iterations": int(best.nit), "grad_max": gnorm},
        notes=notes,
    )
