"""Normal-normal random-effects model with the REML heterogeneity estimator."""

from __future__ import annotations

import math

import numpy as np
from scipy import optimize, stats

from ..core import FitResult, effect_arrays

Z975 = stats.norm.ppf(0.975)


def restricted_loglik(tau2, y, v):
    """Restricted log-likelihood of ``tau2`` (additive constants dropped)."""
    w = 1.0 / (v + tau2)
    sw = w.sum()
    mu = (w * y).sum() / sw
    return -0.5 * (np.log(v + tau2).sum() + math.log(sw) + (w * (y - mu) ** 2).sum())


def _dl_tau2(y, v):
    w = 1.0 / v
    mu = (w * y).sum() / w.sum()
    q = (w * (y - mu) ** 2).sum()
    c = w.sum() - (w**2).sum() / w.sum()
    return max(0.0, (q - (y.size - 1)) / c)


def reml_tau2(y, v, tol=1e-12, maxiter=200) -> tuple[float, bool, int]:
    """Fisher scoring for the REML estimate, truncated at zero.

    Returns ``(tau2, converged, iterations)``.
    """
    tau2 = _dl_tau2(y, v)
    ll = restricted_loglik(tau2, y, v)
    for it in range(1, maxiter + 1):
        w = 1.0 / (v + tau2)
        P = np.diag(w) - np.outer(w, w) / w.sum()
        Py = P @ y
        score = 0.5 * (Py @ Py - np.trace(P))
        info = 0.5 * np.sum(P * P)
        step = score / info
        new = max(0.0, tau2 + step)
        new_ll = restricted_loglik(new, y, v)
        halvings = 0
        while new_ll < ll - 1e-14 and halvings < 50:
            step *= 0.5
            new = max(0.0, tau2 + step)
            new_ll = restricted_loglik(new, y, v)
            halvings += 1
        if abs(new - tau2) <= tol * max(1.0, tau2):
            return new, True, it
        tau2, ll = new, new_ll
    return tau2, False, maxiter


def generalized_q(tau2, y, v):
    w = 1.0 / (v + tau2)
    mu = (w * y).sum() / w.sum()
    return (w * (y - mu) ** 2).sum()


def q_profile_ci(y, v, level=0.95) -> tuple[float, float]:
    """Q-profile interval for tau^2; ``Q(tau2)`` is decreasing in ``tau2``."""
    df = y.size - 1
    hi_crit = stats.chi2.ppf(1 - (1 - level) / 2, df)
    lo_crit = stats.chi2.ppf((1 - level) / 2, df)
    q0 = generalized_q(0.0, y, v)

    def solve(crit):
        if q0 <= crit:
            return 0.0
        upper = max(1.0, 10 * np.var(y))
        while generalized_q(upper, y, v) > crit:
            upper *= 4.0
        return optimize.brentq(lambda t: generalized_q(t, y, v) - crit, 0.0, upper, xtol=1e-12)

    return solve(hi_crit), solve(lo_crit)


def fit_reml(effects, model_id: str = "normal-normal(REML)") -> FitResult:
    """REML fit with Wald CI for mu, Q-profile CI for tau^2 and empirical-Bayes study effects."""
    y, v = effect_arrays(effects)
    if y.size < 2:
        raise ValueError("need at least two studies")
    notes = []
    tau2, converged, iters = reml_tau2(y, v)
    if not converged:
        upper = max(10.0, 100 * np.var(y))
        res = optimize.minimize_scalar(
            lambda t: -restricted_loglik(t, y, v), bounds=(0.0, upper), method="bounded",
            options={"xatol": 1e-12},
        )
        tau2, converged = float(res.x), bool(res.success)
        notes.append("Fisher scoring did not converge; used bounded Brent search")
    w = 1.0 / (v + tau2)
    mu = float((w * y).sum() / w.sum())
    var_mu = 1.0 / w.sum()
    se = math.sqrt(var_mu)
    lam = tau2 / (tau2 + v)
    theta = lam * y + (1 - lam) * mu
    theta_se = np.sqrt(lam * v + (1 - lam) ** 2 * var_mu)
    theta_ci = np.column_stack([theta - Z975 * theta_se, theta + Z975 * theta_se])
    ids = _ids(effects)
    return FitResult(
        model_id=model_id,
        mu=mu,
        mu_ci=(mu - Z975 * se, mu + Z975 * se),
        tau2=float(tau2),
        tau2_ci=q_profile_ci(y, v),
        theta=theta,
        theta_ci=theta_ci,
        study_ids=ids,
        extras={
            "mu_se": se,
            "prediction_interval": (
                mu - Z975 * math.sqrt(tau2 + var_mu),
                mu + Z975 * math.sqrt(tau2 + var_mu),
            ),
        },
        converged=converged,
        diagnostics={"iterations": iters, "restricted_loglik": float(restricted_loglik(tau2, y, v))},
        notes=notes,
    )


def _ids(effects):
    try:
        return [r.study_id for r in effects]
    except AttributeError:
        return None
