"""Normal-t model: normal within-study noise around t-distributed study effects.

The marginal density of an observed effect is the convolution of
``N(0, v_i)`` with a location-scale t.  Writing the t as a scale mixture of
normals, ``theta | lam ~ N(mu, omega^2 / lam)`` with
``lam ~ Gamma(nu/2, rate=nu/2)``, turns it into a one-dimensional average of
normal densities over ``lam``.  That average is computed by composite
Gauss-Legendre quadrature on the probability scale of ``lam``, with
log-spaced panels for both tails; the small-``lam`` tail governs outlying
studies.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import optimize, stats
from scipy.special import gammainccinv, gammaincinv, logsumexp, roots_legendre

from ..core import FitResult, effect_arrays
from ..distributions import t_scale
from ._numdiff import hessian, safe_inverse
from .reml import reml_tau2

NU_MAX = 1e3
LOG_TAU_BOUNDS = (-8.0, 3.0)
LOG_NU_BOUNDS = (math.log(1e-2), math.log(NU_MAX - 2.0))
CHI2_CUTOFF = float(stats.chi2.ppf(0.95, 1))

_P_SPLIT = 1e-3
_P_MIN = 1e-40
_Q_MIN = 1e-16


def _log_panel(n, lo, hi):
    u, w = roots_legendre(n)
    u = lo + 0.5 * (u + 1.0) * (hi - lo)
    x = np.exp(u)
    return x, 0.5 * w * (hi - lo) * x


def _probability_nodes():
    # lower tail, uniform in log p: small lam drives the density far from mu
    p_lo, w_lo = _log_panel(64, math.log(_P_MIN), math.log(_P_SPLIT))
    # bulk panel on [split, 1 - split], nodes crowded towards the lower end
    s, w = roots_legendre(96)
    s = 0.5 * (s + 1.0)
    span = 1.0 - 2.0 * _P_SPLIT
    p_mid = _P_SPLIT + span * s**2
    w_mid = w * span * s
    # upper tail, uniform in log(1 - p): the quantile has a log singularity at p = 1
    q_hi, w_hi = _log_panel(48, math.log(_Q_MIN), math.log(_P_SPLIT))
    w_all = np.concatenate([w_lo, w_mid, w_hi])
    return np.concatenate([p_lo, p_mid]), q_hi, np.log(w_all / w_all.sum())


_P, _Q, _LOGW = _probability_nodes()


def _lambda_nodes(nu):
    k = 0.5 * nu
    return np.concatenate([gammaincinv(k, _P), gammainccinv(k, _Q)]) / k


def convolution_logpdf(y, v, mu, tau2, nu):
    """Log density of ``y`` when ``y ~ N(theta, v)`` and ``theta ~ t`` with mean ``mu``, variance ``tau2``."""
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    if tau2 <= 0:
        return -0.5 * (np.log(2 * math.pi * v) + (y - mu) ** 2 / v)
    omega2 = t_scale(tau2, nu) ** 2
    lam = _lambda_nodes(nu)
    with np.errstate(divide="ignore"):
        var = v[..., None] + omega2 / lam
    ll = -0.5 * (np.log(2 * math.pi * var) + (y[..., None] - mu) ** 2 / var)
    return logsumexp(ll + _LOGW, axis=-1)


def _unpack(par):
    mu, logtau, lognu = par
    return mu, math.exp(2 * logtau), 2.0 + math.exp(lognu)


def loglik(par, y, v):
    mu, tau2, nu = _unpack(par)
    return float(convolution_logpdf(y, v, mu, tau2, nu).sum())


_BOUNDS = [(None, None), LOG_TAU_BOUNDS, LOG_NU_BOUNDS]


def _maximize(y, v, starts, fixed_mu=None):
    best = None
    for x0 in starts:
        x0 = np.asarray(x0, dtype=float)
        if fixed_mu is None:
            fun = lambda p: -loglik(p, y, v)  # noqa: E731
            res = optimize.minimize(fun, x0, method="L-BFGS-B", bounds=_BOUNDS,
                                    options={"ftol": 1e-14, "gtol": 1e-9, "maxiter": 1000})
            x = res.x
        else:
            fun = lambda p: -loglik((fixed_mu, p[0], p[1]), y, v)  # noqa: E731
            res = optimize.minimize(fun, x0[1:], method="L-BFGS-B", bounds=_BOUNDS[1:],
                                    options={"ftol": 1e-14, "gtol": 1e-9, "maxiter": 1000})
            x = np.array([fixed_mu, *res.x])
        if best is None or res.fun < best[1]:
            best = (x, float(res.fun), res)
    return best


def _bisect(f, a, b, tol=1e-9, maxiter=200):
    fa = f(a)
    for _ in range(maxiter):
        mid = 0.5 * (a + b)
        fm = f(mid)
        if (fm > 0) == (fa > 0):
            a, fa = mid, fm
        else:
            b = mid
        if abs(b - a) < tol:
            break
    return 0.5 * (a + b)


def profile_ci_mu(y, v, par_hat, ll_hat, se_guess, cutoff=CHI2_CUTOFF):
    """Profile-likelihood interval for ``mu`` by bisection on ``2*(ll_hat - ll_p(mu)) = cutoff``."""
    warm = {"x": np.asarray(par_hat, dtype=float)}

    def deficit(mu):
        starts = [warm["x"], par_hat]
        x, negll, _ = _maximize(y, v, starts, fixed_mu=mu)
        warm["x"] = x
        return 2.0 * (ll_hat + negll) - cutoff

    ends = []
    for sign in (-1.0, 1.0):
        warm["x"] = np.asarray(par_hat, dtype=float)
        step = max(se_guess, 1e-3)
        inner = par_hat[0]
        outer = inner + sign * step
        while deficit(outer) < 0:
            inner, outer = outer, outer + sign * step
            step *= 1.6
            if abs(outer - par_hat[0]) > 1e3:
                return None
        warm["x"] = np.asarray(par_hat, dtype=float)
        ends.append(_bisect(deficit, inner, outer))
    return ends[0], ends[1]


def fit_normal_t(effects, model_id: str = "normal-t") -> FitResult:
    """ML fit over ``(mu, log tau, log(nu - 2))`` with a profile-likelihood CI for mu."""
    y, v = effect_arrays(effects)
    if y.size < 3:
        raise ValueError("need at least three studies")
    tau2_0, _, _ = reml_tau2(y, v)
    w = 1.0 / (v + tau2_0)
    mu0 = float((w * y).sum() / w.sum())
    lt0 = math.log(max(math.sqrt(tau2_0), 0.05))
    starts = [(mu0, lt0, math.log(nu - 2.0)) for nu in (4.0, 30.0, 500.0)]
    starts.append((float(np.median(y)), lt0, math.log(2.0)))
    par, negll, res = _maximize(y, v, starts)
    ll_hat = -negll
    mu, tau2, nu = _unpack(par)
    notes = []
    converged = bool(res.success) and np.isfinite(ll_hat)
    if par[2] >= LOG_NU_BOUNDS[1] - 1e-4:
        nu = NU_MAX
        notes.append(f"nu diverges; capped at {NU_MAX:g} (t collapses to normal)")
    if par[1] <= LOG_TAU_BOUNDS[0] + 1e-4:
        tau2 = 0.0
        notes.append("tau at lower bound; reported as 0")
    H = hessian(lambda p: -loglik(p, y, v), par)
    cov = safe_inverse(H[:1, :1]) if tau2 == 0 else safe_inverse(H)
    se_guess = math.sqrt(cov[0, 0]) if cov is not None else float(np.sqrt(1.0 / np.sum(1.0 / v)))
    mu_ci = profile_ci_mu(y, v, par, ll_hat, se_guess)
    if mu_ci is None:
        notes.append("profile likelihood did not cross the cutoff; mu interval omitted")
    return FitResult(
        model_id=model_id,
        mu=float(mu),
        mu_ci=mu_ci,
        tau2=float(tau2),
        tau2_ci=None,
        study_ids=_ids(effects),
        extras={"nu": float(nu), "omega": t_scale(tau2, nu) if tau2 > 0 else 0.0,
                "profile_cutoff": CHI2_CUTOFF},
        converged=converged,
        diagnostics={"loglik": ll_hat, "iterations": int(res.nit)},
        notes=notes,
    )


def _ids(effects):
    try:
        return [r.study_id for r in effects]
    except AttributeError:
        return None
