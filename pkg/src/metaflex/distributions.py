"""Probability primitives shared by the fitters and the data generator.

Densities are parameterized on the standard-deviation scale throughout:
``normal(mean, sd)``, ``half-normal(sd)`` and so on.  Prior tables quoted in
variance form (``N(0, 10^4)``) are converted where the model registry is
built, not here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import special, stats

__all__ = [
    "SkewNormalParams",
    "SkewNormalMoments",
    "TDistParams",
    "StickBreak",
    "DistSpec",
    "SN_SKEW_MAX",
    "sn_from_moments",
    "sn_to_moments",
    "sn_delta",
    "t_scale",
    "t_variance",
    "stick_break",
    "dp_truncation",
    "log_density",
    "sample",
    "sample_sn",
    "sample_binomial",
    "sample_discrete_uniform",
]

_B = math.sqrt(2.0 / math.pi)
_C = (4.0 - math.pi) / 2.0
_LOG_2PI = math.log(2.0 * math.pi)

#: Supremum of |skewness| attainable by a skew-normal (shape -> +/- infinity).
SN_SKEW_MAX = _C * _B**3 / (1.0 - _B**2) ** 1.5


class SkewNormalParams(NamedTuple):
    """Direct parameters: location ``xi``, scale ``omega`` and shape ``shape``."""

    xi: float
    omega: float
    shape: float


class SkewNormalMoments(NamedTuple):
    """Centred parameters: ``mean``, ``var`` (tau^2) and ``skew``."""

    mean: float
    var: float
    skew: float


class TDistParams(NamedTuple):
    mean: float
    scale: float
    df: float


@dataclass(frozen=True)
class StickBreak:
    """Truncated stick-breaking draw: raw sticks ``q`` (N-1) and weights ``p`` (N)."""

    q: np.ndarray
    p: np.ndarray


def sn_delta(shape):
    return np.asarray(shape) / np.sqrt(1.0 + np.asarray(shape) ** 2)


def sn_from_moments(m: SkewNormalMoments) -> SkewNormalParams:
    """Map (mean, variance, skewness) to skew-normal (xi, omega, shape).

    The skewness relation is inverted in closed form: with ``c = (4 - pi)/2``
    and ``r = (|a|/c)^(2/3)`` the quantity ``b*delta`` satisfies
    ``(b*delta)^2 = r / (1 + r)`` and carries the sign of ``a``.

    Raises
    ------
    ValueError
        If ``var <= 0`` or ``|skew| >= SN_SKEW_MAX``.
    """
    mean, var, skew = (float(v) for v in m)
    if not var > 0:
        raise ValueError(f"variance must be positive, got {var}")
    if not abs(skew) < SN_SKEW_MAX:
        raise ValueError(
            f"|skewness| must be below {SN_SKEW_MAX:.6f} for a skew-normal, got {skew}"
        )
    r = (abs(skew) / _C) ** (2.0 / 3.0)
    bd = math.copysign(math.sqrt(r / (1.0 + r)), skew)
    delta = bd / _B
    shape = delta / math.sqrt(1.0 - delta * delta)
    omega = math.sqrt(var / (1.0 - bd * bd))
    return SkewNormalParams(mean - omega * bd, omega, shape)


def sn_to_moments(p: SkewNormalParams) -> SkewNormalMoments:
    """Mean, variance and skewness of a skew-normal given (xi, omega, shape)."""
    xi, omega, shape = (float(v) for v in p)
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    bd = _B * shape / math.sqrt(1.0 + shape * shape)
    one_minus = 1.0 - bd * bd
    return SkewNormalMoments(
        xi + omega * bd,
        omega * omega * one_minus,
        _C * bd**3 / one_minus**1.5,
    )


def sn_moments_array(xi, omega, shape):
    """Vectorized :func:`sn_to_moments` over posterior draws."""
    bd = _B * sn_delta(shape)
    one_minus = 1.0 - bd * bd
    return xi + omega * bd, omega**2 * one_minus, _C * bd**3 / one_minus**1.5


def t_scale(tau2: float, nu: float) -> float:
    """Scale ``omega`` of a t random effect whose variance is ``tau2``."""
    if not nu > 2:
        raise ValueError(f"degrees of freedom must exceed 2, got {nu}")
    if not tau2 > 0:
        raise ValueError(f"tau2 must be positive, got {tau2}")
    if math.isinf(nu):
        return math.sqrt(tau2)
    return math.sqrt(tau2 * (nu - 2.0) / nu)


def t_variance(omega, nu):
    """Inverse of :func:`t_scale`: ``omega^2 * nu / (nu - 2)``."""
    return np.asarray(omega) ** 2 * np.asarray(nu) / (np.asarray(nu) - 2.0)


def stick_break(q) -> StickBreak:
    """Weights from raw sticks; the last weight takes whatever stick is left.

    ``q`` may be a vector of length N-1 or a stack of such vectors along the
    last axis.
    """
    q = np.asarray(q, dtype=float)
    if np.any((q < 0) | (q > 1)):
        raise ValueError("sticks must lie in [0, 1]")
    remaining = np.cumprod(1.0 - q, axis=-1)
    lead = np.ones(q.shape[:-1] + (1,))
    before = np.concatenate([lead, remaining], axis=-1)
    p = np.concatenate([q, np.ones_like(lead)], axis=-1) * before
    return StickBreak(q=q, p=p)


def dp_truncation(alpha_max: float) -> int:
    """Number of atoms for a truncated DP whose concentration is at most ``alpha_max``.

    Uses ``N = ceil(1 + 5 * alpha_max)``, which keeps the expected mass on the
    final atom near 0.01.  A 1e-9 slack stops a rounding excess above an
    integer from adding an atom.
    """
    if not alpha_max > 0:
        raise ValueError(f"alpha_max must be positive, got {alpha_max}")
    return 1 + max(0, math.ceil(5.0 * alpha_max - 1e-9))


_FAMILY_ARITY = {
    "normal": 2,
    "half-normal": 1,
    "uniform": 2,
    "exponential": (1, 2),
    "gamma": 2,
    "student-t": 3,
    "skew-normal": 3,
    "beta-stick": 2,
}


@dataclass(frozen=True)
class DistSpec:
    """A family tag plus its parameter vector.

    ============  ==============================  =====================
    family        params                          support
    ============  ==============================  =====================
    normal        (mean, sd)                      real line
    half-normal   (sd,)                           [0, inf)
    uniform       (lo, hi)                        [lo, hi]
    exponential   (rate,) or (rate, lower)        [lower, inf)
    gamma         (shape, rate)                   (0, inf)
    student-t     (loc, scale, df)                real line
    skew-normal   (xi, omega, shape)              real line
    beta-stick    (a, b)                          [0, 1]
    ============  ==============================  =====================

    The two-parameter exponential is truncated below ``lower``; by
    memorylessness that is a shift.
    """

    family: str
    params: tuple[float, ...]

    def __post_init__(self):
        arity = _FAMILY_ARITY.get(self.family)
        if arity is None:
            raise ValueError(f"unknown distribution family {self.family!r}")
        object.__setattr__(self, "params", tuple(float(v) for v in self.params))
        allowed = arity if isinstance(arity, tuple) else (arity,)
        if len(self.params) not in allowed:
            raise ValueError(f"{self.family} takes {arity} parameters, got {len(self.params)}")
        f, p = self.family, self.params
        bad = (
            (f in ("normal", "student-t", "skew-normal") and not p[1] > 0)
            or (f == "half-normal" and not p[0] > 0)
            or (f == "uniform" and not p[1] > p[0])
            or (f == "exponential" and not p[0] > 0)
            or (f in ("gamma", "beta-stick") and not (p[0] > 0 and p[1] > 0))
            or (f == "student-t" and not p[2] > 0)
        )
        if bad:
            raise ValueError(f"invalid parameters {p} for {f}")

    @property
    def lower(self) -> float:
        f, p = self.family, self.params
        if f in ("half-normal", "gamma", "beta-stick"):
            return 0.0
        if f == "uniform":
            return p[0]
        if f == "exponential":
            return p[1] if len(p) == 2 else 0.0
        return -math.inf

    @property
    def upper(self) -> float:
        if self.family == "uniform":
            return self.params[1]
        if self.family == "beta-stick":
            return 1.0
        return math.inf

    def __str__(self):
        return f"{self.family}({', '.join(f'{v:g}' for v in self.params)})"


def log_density(d: DistSpec, x):
    """Natural-log density of ``d`` at ``x`` (vectorized); ``-inf`` off support."""
    x = np.asarray(x, dtype=float)
    f, p = d.family, d.params
    with np.errstate(divide="ignore", invalid="ignore"):
        if f == "normal":
            z = (x - p[0]) / p[1]
            return -0.5 * z * z - math.log(p[1]) - 0.5 * _LOG_2PI
        if f == "half-normal":
            z = x / p[0]
            out = -0.5 * z * z - math.log(p[0]) + 0.5 * math.log(2.0 / math.pi)
            return np.where(x >= 0, out, -np.inf)
        if f == "uniform":
            inside = (x >= p[0]) & (x <= p[1])
            return np.where(inside, -math.log(p[1] - p[0]), -np.inf)
        if f == "exponential":
            lo = p[1] if len(p) == 2 else 0.0
            return np.where(x >= lo, math.log(p[0]) - p[0] * (x - lo), -np.inf)
        if f == "gamma":
            out = p[0] * math.log(p[1]) - special.gammaln(p[0]) + (p[0] - 1.0) * np.log(x) - p[1] * x
            return np.where(x > 0, out, -np.inf)
        if f == "student-t":
            return stats.t.logpdf(x, p[2], loc=p[0], scale=p[1])
        if f == "skew-normal":
            z = (x - p[0]) / p[1]
            return (
                math.log(2.0 / p[1]) - 0.5 * z * z - 0.5 * _LOG_2PI + special.log_ndtr(p[2] * z)
            )
        if f == "beta-stick":
            inside = (x >= 0) & (x <= 1)
            out = stats.beta.logpdf(x, p[0], p[1])
            return np.where(inside, out, -np.inf)
    raise ValueError(f"unknown family {f!r}")  # pragma: no cover


def sample_sn(params: SkewNormalParams, rng: np.random.Generator, size=None):
    """Skew-normal draws via ``xi + omega * (delta*|z0| + sqrt(1-delta^2)*z1)``."""
    xi, omega, shape = params
    delta = sn_delta(np.asarray(shape, dtype=float))
    z0 = np.abs(rng.standard_normal(size))
    z1 = rng.standard_normal(size)
    return xi + omega * (delta * z0 + np.sqrt(1.0 - delta * delta) * z1)


def sample_binomial(m, rho, rng: np.random.Generator, size=None):
    return rng.binomial(m, rho, size=size)


def sample_discrete_uniform(lo: int, hi: int, rng: np.random.Generator, size=None):
    """Integers uniformly on ``lo..hi`` inclusive."""
    return rng.integers(lo, hi, size=size, endpoint=True)


def sample(d: DistSpec, rng: np.random.Generator, size=None):
    """Draw from ``d``; deterministic given the generator state."""
    f, p = d.family, d.params
    if f == "normal":
        return p[0] + p[1] * rng.standard_normal(size)
    if f == "half-normal":
        return p[0] * np.abs(rng.standard_normal(size))
    if f == "uniform":
        return rng.uniform(p[0], p[1], size)
    if f == "exponential":
        lo = p[1] if len(p) == 2 else 0.0
        return lo + rng.exponential(1.0 / p[0], size)
    if f == "gamma":
        return rng.gamma(p[0], 1.0 / p[1], size)
    if f == "student-t":
        return p[0] + p[1] * rng.standard_t(p[2], size)
    if f == "skew-normal":
        return sample_sn(SkewNormalParams(*p), rng, size)
    if f == "beta-stick":
        return rng.beta(p[0], p[1], size)
    raise ValueError(f"unknown family {f!r}")  # pragma: no cover
