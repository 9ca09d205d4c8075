"""Two-component common-mean normal mixture for outlier-robust meta-analysis.

``y_i ~ w1 N(mu, v_i + tau1^2) + w2 N(mu, v_i + tau2^2)`` with
``tau2^2 >= tau1^2``; the second component collects outlying studies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from ..core import FitResult, effect_arrays
from ._numdiff import hessian, safe_inverse
from .reml import Z975, fit_reml

TOL = 1e-8


@dataclass
class CommonMeanMixtureResult:
    mu: float
    tau2_1: float
    tau2_2: float
    weights: tuple[float, float]
    outlier_prob: np.ndarray
    loglik_trace: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = True

    @property
    def loglik(self) -> float:
        return self.loglik_trace[-1]


def _logpdf(y, v, mu, tau2):
    s = v + tau2
    return -0.5 * (np.log(2 * math.pi * s) + (y - mu) ** 2 / s)


def mixture_loglik(y, v, mu, tau2_1, tau2_2, w2) -> float:
    a = math.log1p(-w2) + _logpdf(y, v, mu, tau2_1) if w2 < 1 else np.full(y.size, -np.inf)
    b = math.log(w2) + _logpdf(y, v, mu, tau2_2) if w2 > 0 else np.full(y.size, -np.inf)
    return float(np.logaddexp(a, b).sum())


def _responsibilities(y, v, mu, t1, t2, w2):
    a = math.log1p(-w2) + _logpdf(y, v, mu, t1)
    b = math.log(w2) + _logpdf(y, v, mu, t2)
    return np.exp(b - np.logaddexp(a, b))


def _update_tau2(y, v, mu, r, current, upper):
    """Maximize ``sum r_i log N(y_i; mu, v_i + t)`` over ``t >= 0``; never worse than ``current``."""
    if r.sum() <= 0:
        return current

    def negq(t):
        return -(r * _logpdf(y, v, mu, t)).sum()

    res = optimize.minimize_scalar(negq, bounds=(0.0, upper), method="bounded",
                                   options={"xatol": 1e-12})
    cands = [current, 0.0, float(res.x)]
    return min(cands, key=negq)


def em_common_mean(y, v, start, max_iter=5000, tol=TOL) -> CommonMeanMixtureResult:
    """Run EM (conditional M-steps) from ``start = (mu, tau2_1, tau2_2, w2)``."""
    mu, t1, t2, w2 = start
    upper = max(10.0, 50.0 * float(np.var(y)) + float(np.max(v)))
    trace = [mixture_loglik(y, v, mu, t1, t2, w2)]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        r2 = _responsibilities(y, v, mu, t1, t2, w2)
        r1 = 1.0 - r2
        w2 = float(np.clip(r2.mean(), 0.0, 1.0))
        prec = r1 / (v + t1) + r2 / (v + t2)
        mu = float((prec * y).sum() / prec.sum())
        t1 = _update_tau2(y, v, mu, r1, t1, upper)
        t2 = _update_tau2(y, v, mu, r2, t2, upper)
        trace.append(mixture_loglik(y, v, mu, t1, t2, w2))
        if trace[-1] - trace[-2] < tol:
            converged = True
            break
        if w2 <= 1e-10 or w2 >= 1 - 1e-10:
            converged = True
            break
    if t1 > t2:
        t1, t2, w2 = t2, t1, 1.0 - w2
    r2 = _responsibilities(y, v, mu, t1, t2, w2) if 0 < w2 < 1 else np.full(y.size, w2)
    return CommonMeanMixtureResult(mu, t1, t2, (1.0 - w2, w2), r2, trace, it, converged)


def fit_common_mean_mixture(
    effects, n_restarts: int = 5, seed: int = 0, model_id: str = "normal-common-mean-mixture"
) -> FitResult:
    """Best of ``n_restarts`` seeded EM runs; ``tau2`` reports the outlier-component variance."""
    y, v = effect_arrays(effects)
    if y.size < 3:
        raise ValueError("need at least three studies")
    rng = np.random.default_rng(seed)
    base = fit_reml((y, v))
    spread = max(float(np.var(y)), 0.01)
    starts = [(base.mu, 0.5 * base.tau2, 2.0 * base.tau2 + spread, 0.2)]
    for _ in range(n_restarts - 1):
        starts.append((
            float(base.mu + rng.normal(0, math.sqrt(spread) / 2)),
            float(rng.uniform(0, 1) * base.tau2),
            float(base.tau2 + rng.uniform(0.5, 5) * spread),
            float(rng.uniform(0.05, 0.5)),
        ))
    runs = [em_common_mean(y, v, s) for s in starts]
    best = max(runs, key=lambda r: r.loglik)
    notes = []
    ids = _ids(effects)
    if best.weights[1] < 1e-4 or best.weights[1] > 1 - 1e-4:
        notes.append("mixture collapsed to one component; reporting the single-normal fit")
        fit = fit_reml((y, v), model_id=model_id)
        fit.study_ids = ids
        fit.theta = fit.theta_ci = None
        fit.tau2_ci = None
        fit.extras.update(
            tau2_nonoutlier=fit.tau2, weights=(1.0, 0.0), outlier_prob=np.zeros(y.size),
            loglik_trace=best.loglik_trace,
        )
        fit.converged = best.converged and fit.converged
        fit.notes.extend(notes)
        return fit

    free = [True, best.tau2_1 > 1e-10, best.tau2_2 > 1e-10, True]
    x_hat = np.array([best.mu, best.tau2_1, best.tau2_2, best.weights[1]])

    def negll(p):
        full = x_hat.copy()
        full[np.array(free)] = p
        return -mixture_loglik(y, v, full[0], max(full[1], 0), max(full[2], 0), full[3])

    cov = safe_inverse(hessian(negll, x_hat[np.array(free)], step=1e-5))
    if cov is None:
        h = hessian(lambda p: negll(np.concatenate([p, x_hat[np.array(free)][1:]])), x_hat[:1])
        cov = safe_inverse(h)
        notes.append("observed information singular in nuisance directions; mu-only curvature used")
    mu_ci = None
    extras = {
        "tau2_nonoutlier": best.tau2_1,
        "weights": best.weights,
        "outlier_prob": best.outlier_prob,
        "loglik_trace": best.loglik_trace,
    }
    if cov is not None:
        se = math.sqrt(cov[0, 0])
        mu_ci = (best.mu - Z975 * se, best.mu + Z975 * se)
        extras["mu_se"] = se
    return FitResult(
        model_id=model_id,
        mu=best.mu,
        mu_ci=mu_ci,
        tau2=best.tau2_2,
        tau2_ci=None,
        study_ids=ids,
        extras=extras,
        converged=best.converged,
        diagnostics={"loglik": best.loglik, "iterations": best.iterations,
                     "restart_logliks": [r.loglik for r in runs]},
        notes=notes,
    )


def _ids(effects):
    try:
        return [r.study_id for r in effects]
    except AttributeError:
        return None
