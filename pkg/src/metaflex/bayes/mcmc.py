"""Adaptive Metropolis-within-Gibbs sampler for the Bayesian meta-analysis models.

Parametric random effects (normal, t, skew-normal) use componentwise
random-walk Metropolis.  Study-level parameters are conditionally independent
given the hyperparameters, so their accept/reject steps run vectorized across
studies.  Two extra moves shift the location and rescale the spread of all
study effects at once while the standardized deviations stay put; they cut the
strong coupling between hyperparameters and study effects.

Dirichlet-process models use the blocked Gibbs sampler for a truncated
stick-breaking prior: categorical cluster assignments, Metropolis moves for
occupied atoms, fresh base-measure draws for empty ones, conjugate Beta
sticks, and Metropolis steps for the concentration and base scale.

Step sizes adapt in batches during burn-in and are frozen afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import log_expit, log_ndtr

from ..distributions import DistSpec, log_density, sn_moments_array, stick_break
from .models import ZETA_PRIOR, ModelInstance

__all__ = ["McmcConfig", "DESK_CONFIG", "PosteriorDraws", "run_mcmc", "dp_moments"]

_LOG_2PI = math.log(2 * math.pi)
_LOG2 = math.log(2.0)
_B = math.sqrt(2 / math.pi)


@dataclass(frozen=True)
class McmcConfig:
    n_chains: int = 2
    n_iter: int = 50_000
    burn_in: int = 10_000
    thin: int = 1
    rhat_threshold: float = 1.05
    adapt_every: int = 50
    target_accept: float = 0.44
    init_steps: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.n_chains < 2:
            raise ValueError("need at least two chains for R-hat")
        if not 0 <= self.burn_in < self.n_iter:
            raise ValueError("burn_in must be smaller than n_iter")
        if self.thin < 1 or self.adapt_every < 1:
            raise ValueError("thin and adapt_every must be positive")

    @property
    def n_keep(self) -> int:
        return len(range(self.burn_in, self.n_iter, self.thin))


#: Desk-scale default: 2 chains x 6,000 iterations with 1,000 burn-in.
DESK_CONFIG = McmcConfig(n_iter=6000, burn_in=1000)


@dataclass
class PosteriorDraws:
    """Retained draws, shaped ``(chains, draws, ...)`` per monitored quantity."""

    model_id: str
    family: str
    samples: dict[str, np.ndarray]
    gate: tuple[str, ...]
    study_ids: tuple[str, ...]
    accept_rates: list[dict[str, float]] = field(default_factory=list)
    failed: bool = False
    messages: list[str] = field(default_factory=list)

    def __getitem__(self, name) -> np.ndarray:
        return self.samples[name]

    def __contains__(self, name) -> bool:
        return name in self.samples

    @property
    def n_chains(self) -> int:
        return next(iter(self.samples.values())).shape[0]

    @property
    def n_draws(self) -> int:
        return next(iter(self.samples.values())).shape[1]

    def flat(self, name) -> np.ndarray:
        a = self.samples[name]
        return a.reshape((-1,) + a.shape[2:])


# ----------------------------------------------------------------------------
# small helpers
# ----------------------------------------------------------------------------


def _scalar_prior(d: DistSpec):
    """Fast scalar log density for the prior families used by the registry."""
    f, p = d.family, d.params
    inf = -math.inf
    if f == "normal":
        m, s = p
        c = -math.log(s) - 0.5 * _LOG_2PI
        return lambda x: c - 0.5 * ((x - m) / s) ** 2
    if f == "half-normal":
        s = p[0]
        c = 0.5 * math.log(2 / math.pi) - math.log(s)
        return lambda x: c - 0.5 * (x / s) ** 2 if x >= 0 else inf
    if f == "uniform":
        lo, hi = p
        c = -math.log(hi - lo)
        return lambda x: c if lo <= x <= hi else inf
    if f == "exponential":
        rate = p[0]
        lo = p[1] if len(p) == 2 else 0.0
        c = math.log(rate)
        return lambda x: c - rate * (x - lo) if x >= lo else inf
    if f == "gamma":
        k, rate = p
        c = k * math.log(rate) - math.lgamma(k)
        return lambda x: c + (k - 1) * math.log(x) - rate * x if x > 0 else inf
    return lambda x: float(log_density(d, x))


# transforms for random-walk proposals: (to unconstrained, from unconstrained, log|dx/du|)
_IDENT = (lambda x: x, lambda u: u, lambda x: 0.0)
_LOG = (math.log, math.exp, math.log)
_LOG_NU = (lambda x: math.log(x - 2.0), lambda u: 2.0 + math.exp(u), lambda x: math.log(x - 2.0))
_TRANSFORM = {
    "mu": _IDENT, "xi": _IDENT, "gamma": _IDENT,
    "tau": _LOG, "omega": _LOG, "tau_b": _LOG, "alpha": _LOG,
    "nu": _LOG_NU,
}


def _re_logpdf(family, theta, h):
    """Per-study random-effects log density, constants independent of ``h`` kept."""
    if family == "normal":
        z = (theta - h["mu"]) / h["tau"]
        return -math.log(h["tau"]) - 0.5 * z * z
    if family == "t":
        nu = h["nu"]
        z = (theta - h["mu"]) / h["omega"]
        c = math.lgamma(0.5 * (nu + 1)) - math.lgamma(0.5 * nu) - 0.5 * math.log(nu * math.pi)
        return c - math.log(h["omega"]) - 0.5 * (nu + 1) * np.log1p(z * z / nu)
    if family == "skew-normal":
        z = (theta - h["xi"]) / h["omega"]
        return _LOG2 - math.log(h["omega"]) - 0.5 * z * z + log_ndtr(h["gamma"] * z)
    raise ValueError(family)  # pragma: no cover


_LOC = {"normal": "mu", "t": "mu", "skew-normal": "xi"}
_SCALE = {"normal": "tau", "t": "omega", "skew-normal": "omega"}


def _derived_moments(family, h):
    """Mean and variance of the random-effects distribution for one state."""
    if family == "normal":
        return h["mu"], h["tau"] ** 2
    if family == "t":
        return h["mu"], h["omega"] ** 2 * h["nu"] / (h["nu"] - 2.0)
    m, v, _ = sn_moments_array(h["xi"], h["omega"], h["gamma"])
    return float(m), float(v)


class _Adapter:
    """Batch adaptation of log step sizes toward a target acceptance rate."""

    def __init__(self, steps: dict[str, np.ndarray | float], every: int, target: float):
        self.log_step = {k: np.log(np.asarray(v, dtype=float)) for k, v in steps.items()}
        self.acc = {k: np.zeros_like(v) for k, v in self.log_step.items()}
        self.tries = {k: np.zeros_like(v) for k, v in self.log_step.items()}
        self.post_acc = {k: np.zeros_like(v) for k, v in self.log_step.items()}
        self.post_tries = {k: np.zeros_like(v) for k, v in self.log_step.items()}
        self.every = every
        self.target = target
        self.batch = 0

    def step(self, name):
        return np.exp(self.log_step[name])

    def record(self, name, accepted, tried=1.0, burning=True):
        if burning:
            self.acc[name] = self.acc[name] + accepted
            self.tries[name] = self.tries[name] + tried
        else:
            self.post_acc[name] = self.post_acc[name] + accepted
            self.post_tries[name] = self.post_tries[name] + tried

    def maybe_adapt(self, it):
        if (it + 1) % self.every:
            return
        self.batch += 1
        gain = 3.0 / math.sqrt(self.batch)
        for k in self.log_step:
            tries = self.tries[k]
            rate = np.where(tries > 0, self.acc[k] / np.maximum(tries, 1), self.target)
            self.log_step[k] = np.clip(self.log_step[k] + gain * (rate - self.target), -12.0, 4.0)
            self.acc[k] = np.zeros_like(self.acc[k])
            self.tries[k] = np.zeros_like(self.tries[k])

    def post_rates(self) -> dict[str, float]:
        out = {}
        for k in self.post_acc:
            tries = float(np.sum(self.post_tries[k]))
            out[k] = float(np.sum(self.post_acc[k]) / tries) if tries else float("nan")
        return out


class _Data:
    """Study-level likelihood pieces, vectorized over studies (and atoms)."""

    def __init__(self, m: ModelInstance):
        self.binomial = m.likelihood == "binomial"
        if self.binomial:
            self.t, self.mt, self.c, self.mc = m.t, m.mt, m.c, m.mc
            self.t_fail = self.mt - self.t
            self.c_fail = self.mc - self.c
        else:
            self.y, self.v = m.y, m.v

    def ctrl(self, zeta):
        return self.c * log_expit(zeta) + self.c_fail * log_expit(-zeta)

    def effect(self, theta, zeta=None):
        """Log likelihood of each study's treatment-effect data given ``theta``."""
        if self.binomial:
            eta = zeta + theta
            return self.t * log_expit(eta) + self.t_fail * log_expit(-eta)
        d = self.y - theta
        return -0.5 * d * d / self.v

    def effect_matrix(self, atoms, zeta=None):
        """``(n, N)`` log likelihoods of every study at every atom."""
        if self.binomial:
            eta = zeta[:, None] + atoms[None, :]
            return self.t[:, None] * log_expit(eta) + self.t_fail[:, None] * log_expit(-eta)
        d = self.y[:, None] - atoms[None, :]
        return -0.5 * d * d / self.v[:, None]


def _zeta_prior(zeta):
    s = ZETA_PRIOR.params[1]
    return -0.5 * (zeta / s) ** 2


# ----------------------------------------------------------------------------
# parametric random effects
# ----------------------------------------------------------------------------


def _init_parametric(m: ModelInstance, rng):
    y0, v0 = m.y0, m.v0
    theta = y0 + 0.5 * np.sqrt(v0) * rng.standard_normal(m.n)
    sd = float(np.std(y0)) if m.n > 1 else 0.5
    h = {}
    loc = float(np.mean(y0) + 0.25 * rng.standard_normal())
    spread = max(sd, 0.05) * float(rng.uniform(0.6, 1.4))
    if m.family == "normal":
        h = {"mu": loc, "tau": spread}
    elif m.family == "t":
        nu = float(rng.uniform(4.0, 20.0))
        h = {"mu": loc, "omega": spread * math.sqrt((nu - 2) / nu), "nu": nu}
    elif m.family == "skew-normal":
        g = float(rng.normal(0.0, 1.0))
        h = {"xi": loc - spread * _B * g / math.sqrt(1 + g * g), "omega": spread, "gamma": g}
    for k in ("tau", "omega"):
        if k in h and k in m.priors and m.priors[k].family == "uniform":
            h[k] = min(h[k], 0.9 * m.priors[k].upper)
    h.update(m.fixed)
    zeta = None
    if m.likelihood == "binomial":
        zeta = np.log((m.c + 0.5) / (m.mc - m.c + 0.5)) + 0.1 * rng.standard_normal(m.n)
    return zeta, theta, h


def _parametric_chain(m: ModelInstance, cfg: McmcConfig, rng: np.random.Generator):
    fam = m.family
    n = m.n
    data = _Data(m)
    priors = {k: _scalar_prior(d) for k, d in m.priors.items()}
    free = m.free_hypers
    loc_name, scale_name = _LOC[fam], _SCALE[fam]
    zeta, theta, h = _init_parametric(m, rng)
    binomial = data.binomial

    steps = {"theta": np.sqrt(m.v0) * 0.8}
    if binomial:
        steps["zeta"] = np.sqrt(1.0 / (m.c + 0.5) + 1.0 / (m.mc - m.c + 0.5)) * 0.8
    for k in free:
        steps[k] = 0.3
    if loc_name in free:
        steps["shift"] = 0.1
    if scale_name in free:
        steps["rescale"] = 0.2
    steps.update({k: v for k, v in cfg.init_steps.items() if k in steps})
    ad = _Adapter(steps, cfg.adapt_every, cfg.target_accept)

    ll_c = data.ctrl(zeta) if binomial else None
    ll_e = data.effect(theta, zeta)
    re = _re_logpdf(fam, theta, h)
    re_sum = float(re.sum())
    prior_val = {k: priors[k](h[k]) for k in free}

    n_keep = cfg.n_keep
    names = ["mu", "tau", "tau2", *HYPER_KEYS[fam], "log_post"]
    out = {k: np.full(n_keep, np.nan) for k in dict.fromkeys(names)}
    out["theta"] = np.full((n_keep, n), np.nan)
    if binomial:
        out["zeta"] = np.full((n_keep, n), np.nan)
    if fam == "skew-normal":
        out["skew"] = np.full(n_keep, np.nan)
    messages = []
    failed = False
    k_out = 0

    for it in range(cfg.n_iter):
        burning = it < cfg.burn_in

        if binomial:
            s = ad.step("zeta")
            prop = zeta + s * rng.standard_normal(n)
            c_new = data.ctrl(prop)
            e_new = data.effect(theta, prop)
            logr = c_new + e_new - ll_c - ll_e + _zeta_prior(prop) - _zeta_prior(zeta)
            acc = np.log(rng.random(n)) < logr
            zeta = np.where(acc, prop, zeta)
            ll_c = np.where(acc, c_new, ll_c)
            ll_e = np.where(acc, e_new, ll_e)
            ad.record("zeta", acc, 1.0, burning)

        s = ad.step("theta")
        prop = theta + s * rng.standard_normal(n)
        e_new = data.effect(prop, zeta)
        re_new = _re_logpdf(fam, prop, h)
        acc = np.log(rng.random(n)) < (e_new + re_new - ll_e - re)
        theta = np.where(acc, prop, theta)
        ll_e = np.where(acc, e_new, ll_e)
        re = np.where(acc, re_new, re)
        re_sum = float(re.sum())
        ad.record("theta", acc, 1.0, burning)

        for k in free:
            fwd, inv, ljac = _TRANSFORM[k]
            x = h[k]
            x_new = inv(fwd(x) + float(ad.step(k)) * rng.standard_normal())
            p_new = priors[k](x_new)
            ok = False
            if p_new > -math.inf:
                h_new = dict(h)
                h_new[k] = x_new
                re_prop = _re_logpdf(fam, theta, h_new)
                rs = float(re_prop.sum())
                logr = rs - re_sum + p_new - prior_val[k] + ljac(x_new) - ljac(x)
                if math.log(rng.random()) < logr:
                    h, re, re_sum, prior_val[k] = h_new, re_prop, rs, p_new
                    ok = True
            else:
                rng.random()
            ad.record(k, ok, 1.0, burning)

        if loc_name in free:
            delta = float(ad.step("shift")) * rng.standard_normal()
            x_new = h[loc_name] + delta
            p_new = priors[loc_name](x_new)
            prop = theta + delta
            e_new = data.effect(prop, zeta)
            logr = float(e_new.sum() - ll_e.sum()) + p_new - prior_val[loc_name]
            ok = math.log(rng.random()) < logr
            if ok:
                theta, ll_e = prop, e_new
                h = dict(h)
                h[loc_name] = x_new
                prior_val[loc_name] = p_new
            ad.record("shift", ok, 1.0, burning)

        if scale_name in free:
            eps = float(ad.step("rescale")) * rng.standard_normal()
            s_old = h[scale_name]
            s_new = s_old * math.exp(eps)
            p_new = priors[scale_name](s_new)
            ok = False
            if p_new > -math.inf:
                loc = h[loc_name]
                prop = loc + (theta - loc) * (s_new / s_old)
                e_new = data.effect(prop, zeta)
                logr = float(e_new.sum() - ll_e.sum()) + p_new - prior_val[scale_name] + eps
                if math.log(rng.random()) < logr:
                    theta, ll_e = prop, e_new
                    h = dict(h)
                    h[scale_name] = s_new
                    prior_val[scale_name] = p_new
                    re = _re_logpdf(fam, theta, h)
                    re_sum = float(re.sum())
                    ok = True
            else:
                rng.random()
            ad.record("rescale", ok, 1.0, burning)

        if burning:
            ad.maybe_adapt(it)
        elif (it - cfg.burn_in) % cfg.thin == 0:
            lp = float(ll_e.sum()) + re_sum + sum(prior_val.values())
            if binomial:
                lp += float(ll_c.sum() + _zeta_prior(zeta).sum())
            if not math.isfinite(lp):
                failed = True
                messages.append(f"non-finite log posterior at iteration {it}")
                break
            mean, var = _derived_moments(fam, h)
            out["mu"][k_out] = mean
            out["tau2"][k_out] = var
            out["tau"][k_out] = math.sqrt(var)
            for key in HYPER_KEYS[fam]:
                out[key][k_out] = h[key]
            if fam == "skew-normal":
                out["skew"][k_out] = float(sn_moments_array(h["xi"], h["omega"], h["gamma"])[2])
            out["theta"][k_out] = theta
            if binomial:
                out["zeta"][k_out] = zeta
            out["log_post"][k_out] = lp
            k_out += 1
        if not np.all(np.isfinite(theta)):
            failed = True
            messages.append(f"non-finite study effects at iteration {it}")
            break
    return out, ad.post_rates(), failed, messages


HYPER_KEYS = {
    "normal": (),
    "t": ("omega", "nu"),
    "skew-normal": ("xi", "omega", "gamma"),
    "dp-points": ("alpha", "mu_b", "tau_b"),
}


# ----------------------------------------------------------------------------
# truncated Dirichlet process, mixture of points
# ----------------------------------------------------------------------------


def dp_moments(p, atoms) -> tuple[float, float]:
    """Mean and variance of the discrete random-effects law ``sum_j p_j delta(x_j)``."""
    mean = float(p @ atoms)
    return mean, max(float(p @ ((atoms - mean) ** 2)), 0.0)


def _stick_update(z, alpha, n_atoms, rng):
    counts = np.bincount(z, minlength=n_atoms)
    tail = np.cumsum(counts[::-1])[::-1]
    after = np.append(tail[1:], 0)[:-1]
    q = rng.beta(1.0 + counts[:-1], alpha + after)
    return np.minimum(q, 1.0 - 1e-15), counts


def _dp_chain(m: ModelInstance, cfg: McmcConfig, rng: np.random.Generator):
    n, N = m.n, m.n_atoms
    data = _Data(m)
    binomial = data.binomial
    priors = {k: _scalar_prior(d) for k, d in m.priors.items()}
    mu_b_prior = m.priors.get("mu_b")
    mu_b_prior_sd = mu_b_prior.params[1] if mu_b_prior is not None else None
    if mu_b_prior is not None and mu_b_prior.family != "normal":
        raise ValueError("the DP base mean needs a normal prior")

    y0 = m.y0
    h = {
        "mu_b": float(np.mean(y0) + 0.25 * rng.standard_normal()),
        "tau_b": max(float(np.std(y0)), 0.1) * float(rng.uniform(0.7, 1.3)),
    }
    a_prior = m.priors.get("alpha")
    a0 = 1.0 if a_prior is None else float(np.clip(1.0, a_prior.lower + 1e-6, a_prior.upper - 1e-6))
    h["alpha"] = a0 * float(rng.uniform(0.8, 1.2)) if a_prior is None or a_prior.family != "uniform" \
        else float(rng.uniform(a_prior.lower, min(a_prior.upper, 2.0)))
    for k in ("tau_b",):
        pr = m.priors.get(k)
        if pr is not None and pr.family == "uniform":
            h[k] = min(h[k], 0.9 * pr.upper)
    h.update(m.fixed)

    atoms = h["mu_b"] + h["tau_b"] * rng.standard_normal(N)
    k0 = min(n, N)
    order = np.argsort(y0)
    # seed the first atoms at a spread of observed effects
    atoms[:k0] = y0[order[np.linspace(0, n - 1, k0).astype(int)]] + 0.05 * rng.standard_normal(k0)
    z = np.argmin(np.abs(y0[:, None] - atoms[None, :k0]), axis=1)
    q, counts = _stick_update(z, h["alpha"], N, rng)
    p = stick_break(q).p
    zeta = None
    if binomial:
        zeta = np.log((m.c + 0.5) / (m.mc - m.c + 0.5)) + 0.1 * rng.standard_normal(n)

    steps = {"atoms": 0.3, "tau_b": 0.3, "alpha": 0.5}
    if binomial:
        steps["zeta"] = np.sqrt(1.0 / (m.c + 0.5) + 1.0 / (m.mc - m.c + 0.5)) * 0.8
    steps.update({k: v for k, v in cfg.init_steps.items() if k in steps})
    ad = _Adapter(steps, cfg.adapt_every, cfg.target_accept)

    n_keep = cfg.n_keep
    out = {k: np.full(n_keep, np.nan) for k in ("mu", "tau", "tau2", "alpha", "mu_b", "tau_b",
                                                 "log_post", "n_clusters")}
    out["theta"] = np.full((n_keep, n), np.nan)
    out["z"] = np.zeros((n_keep, n), dtype=np.int16)
    out["p"] = np.full((n_keep, N), np.nan)
    out["atoms"] = np.full((n_keep, N), np.nan)
    if binomial:
        out["zeta"] = np.full((n_keep, n), np.nan)
    messages = []
    failed = False
    k_out = 0
    ll_c = data.ctrl(zeta) if binomial else None
    ll_e = data.effect(atoms[z], zeta)
    idx = np.arange(n)

    for it in range(cfg.n_iter):
        burning = it < cfg.burn_in
        theta = atoms[z]

        if binomial:
            s = ad.step("zeta")
            prop = zeta + s * rng.standard_normal(n)
            c_new = data.ctrl(prop)
            e_new = data.effect(theta, prop)
            logr = c_new + e_new - ll_c - ll_e + _zeta_prior(prop) - _zeta_prior(zeta)
            acc = np.log(rng.random(n)) < logr
            zeta = np.where(acc, prop, zeta)
            ll_c = np.where(acc, c_new, ll_c)
            ad.record("zeta", acc, 1.0, burning)

        # cluster assignments (Gumbel-max over log weights + likelihood)
        with np.errstate(divide="ignore"):
            logp = np.log(p)
        L = data.effect_matrix(atoms, zeta)
        z = np.argmax(L + logp[None, :] + rng.gumbel(size=(n, N)), axis=1)
        ll_e = L[idx, z]

        # atoms: occupied ones by Metropolis, empty ones from the base measure
        counts = np.bincount(z, minlength=N)
        occ = counts > 0
        s = float(ad.step("atoms"))
        prop = atoms + s * rng.standard_normal(N)
        e_new = data.effect(prop[z], zeta)
        dl = np.bincount(z, weights=e_new - ll_e, minlength=N)
        mb, tb = h["mu_b"], h["tau_b"]
        dprior = -0.5 * (((prop - mb) / tb) ** 2 - ((atoms - mb) / tb) ** 2)
        acc = (np.log(rng.random(N)) < dl + dprior) & occ
        atoms = np.where(acc, prop, atoms)
        fresh = mb + tb * rng.standard_normal(N)
        atoms = np.where(occ, atoms, fresh)
        ll_e = np.where(acc[z], e_new, ll_e)
        ad.record("atoms", float(acc.sum()), float(occ.sum()), burning)

        # sticks
        q, counts = _stick_update(z, h["alpha"], N, rng)
        p = stick_break(q).p
        log1mq_sum = float(np.log1p(-q).sum())

        # concentration
        if "alpha" not in m.fixed:
            a = h["alpha"]
            a_new = a * math.exp(float(ad.step("alpha")) * rng.standard_normal())
            pa = priors["alpha"](a_new)
            ok = False
            if pa > -math.inf:
                def stick_ll(al):
                    return (N - 1) * math.log(al) + (al - 1.0) * log1mq_sum
                logr = (stick_ll(a_new) + pa + math.log(a_new)) - (
                    stick_ll(a) + priors["alpha"](a) + math.log(a)
                )
                if math.log(rng.random()) < logr:
                    h["alpha"] = a_new
                    ok = True
            else:
                rng.random()
            ad.record("alpha", ok, 1.0, burning)

        # base mean (conjugate normal)
        if "mu_b" not in m.fixed:
            prec = N / h["tau_b"] ** 2 + 1.0 / mu_b_prior_sd**2
            mean = (atoms.sum() / h["tau_b"] ** 2 + mu_b_prior.params[0] / mu_b_prior_sd**2) / prec
            h["mu_b"] = float(mean + rng.standard_normal() / math.sqrt(prec))

        # base scale
        if "tau_b" not in m.fixed:
            tb = h["tau_b"]
            tb_new = tb * math.exp(float(ad.step("tau_b")) * rng.standard_normal())
            pt = priors["tau_b"](tb_new)
            ok = False
            if pt > -math.inf:
                ss = float(((atoms - h["mu_b"]) ** 2).sum())

                def base_ll(t):
                    return -N * math.log(t) - 0.5 * ss / (t * t)
                logr = base_ll(tb_new) + pt + math.log(tb_new) - (
                    base_ll(tb) + priors["tau_b"](tb) + math.log(tb)
                )
                if math.log(rng.random()) < logr:
                    h["tau_b"] = tb_new
                    ok = True
            else:
                rng.random()
            ad.record("tau_b", ok, 1.0, burning)

        if burning:
            ad.maybe_adapt(it)
        elif (it - cfg.burn_in) % cfg.thin == 0:
            mean, var = dp_moments(p, atoms)
            with np.errstate(divide="ignore"):
                lp = (
                    float(ll_e.sum())
                    + float(np.log(p[z]).sum())
                    + float((-np.log(h["tau_b"]) - 0.5 * ((atoms - h["mu_b"]) / h["tau_b"]) ** 2).sum())
                    + (N - 1) * math.log(h["alpha"]) + (h["alpha"] - 1.0) * log1mq_sum
                    + sum(priors[k](h[k]) for k in priors)
                )
            if binomial:
                lp += float(ll_c.sum() + _zeta_prior(zeta).sum())
            if not math.isfinite(lp):
                failed = True
                messages.append(f"non-finite log posterior at iteration {it}")
                break
            out["mu"][k_out] = mean
            out["tau2"][k_out] = var
            out["tau"][k_out] = math.sqrt(var)
            for key in ("alpha", "mu_b", "tau_b"):
                out[key][k_out] = h[key]
            out["n_clusters"][k_out] = int(np.count_nonzero(np.bincount(z, minlength=N)))
            out["theta"][k_out] = atoms[z]
            out["z"][k_out] = z
            out["p"][k_out] = p
            out["atoms"][k_out] = atoms
            if binomial:
                out["zeta"][k_out] = zeta
            out["log_post"][k_out] = lp
            k_out += 1
        if not np.all(np.isfinite(atoms)):
            failed = True
            messages.append(f"non-finite atoms at iteration {it}")
            break
    return out, ad.post_rates(), failed, messages


# ----------------------------------------------------------------------------
# driver
# ----------------------------------------------------------------------------

_GATE = {
    "normal": ("mu", "tau"),
    "t": ("mu", "tau", "nu"),
    "skew-normal": ("mu", "tau", "gamma"),
    "dp-points": ("mu", "tau", "alpha"),
}


def _chain_rngs(rng, n_chains) -> list[np.random.Generator]:
    if isinstance(rng, np.random.Generator):
        return list(rng.spawn(n_chains))
    if isinstance(rng, (int, np.integer)) or rng is None:
        return [np.random.default_rng(s) for s in np.random.SeedSequence(rng).spawn(n_chains)]
    rngs = list(rng)
    if len(rngs) != n_chains:
        raise ValueError(f"need {n_chains} chain generators, got {len(rngs)}")
    return rngs


def run_mcmc(
    m: ModelInstance,
    cfg: McmcConfig = DESK_CONFIG,
    rng: np.random.Generator | Sequence[np.random.Generator] | int | None = None,
) -> PosteriorDraws:
    """Run ``cfg.n_chains`` independent chains and collect post-burn-in draws.

    ``rng`` may be one generator (chain streams are spawned from it), a
    sequence with one generator per chain, or an integer seed.
    """
    chain_fn = _dp_chain if m.family == "dp-points" else _parametric_chain
    outs, rates, messages = [], [], []
    failed = False
    for k, r in enumerate(_chain_rngs(rng, cfg.n_chains)):
        out, rate, bad, msgs = chain_fn(m, cfg, r)
        outs.append(out)
        rates.append(rate)
        failed |= bad
        messages += [f"chain {k}: {msg}" for msg in msgs]
    samples = {key: np.stack([o[key] for o in outs]) for key in outs[0]}
    gate = tuple(g for g in _GATE[m.family] if g not in m.fixed and not (
        g == "tau" and _SCALE.get(m.family) in m.fixed))
    return PosteriorDraws(
        model_id=m.spec.model_id,
        family=m.family,
        samples=samples,
        gate=gate,
        study_ids=m.study_ids,
        accept_rates=rates,
        failed=failed,
        messages=messages,
    )
