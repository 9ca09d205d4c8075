"""Simulated binary-outcome meta-analyses and the 22-scenario catalogue."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from .core import MetaDataset, validate_dataset
from .distributions import SkewNormalMoments, SkewNormalParams, sample_sn, sn_from_moments

__all__ = [
    "SCENARIO_SKEWNESS",
    "ScenarioSpec",
    "GenConfig",
    "builtin_scenarios",
    "get_scenario",
    "draw_true_effects",
    "risk_transform",
    "generate_dataset",
]

SCENARIO_SKEWNESS = 0.785


@dataclass(frozen=True)
class ScenarioSpec:
    """True random-effects distribution and meta-analysis size.

    ``mu`` and ``tau2`` hold one entry for ``normal``/``skew-normal`` and one per
    component for ``mixture2``.
    """

    scenario_id: int
    re_kind: str
    mu: tuple[float, ...]
    tau2: tuple[float, ...]
    n_studies: int
    skew: float | None = None
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        k = 2 if self.re_kind == "mixture2" else 1
        if self.re_kind not in ("normal", "skew-normal", "mixture2"):
            raise ValueError(f"unknown re_kind {self.re_kind!r}")
        if len(self.mu) != k or len(self.tau2) != k:
            raise ValueError(f"{self.re_kind} needs {k} mean/variance entries")
        if any(t < 0 for t in self.tau2):
            raise ValueError("variances must be non-negative")
        if (self.skew is not None) != (self.re_kind == "skew-normal"):
            raise ValueError("skew is required for, and only for, skew-normal scenarios")
        if (self.weights is not None) != (k == 2):
            raise ValueError("weights are required for, and only for, mixture scenarios")
        if self.weights is not None and abs(sum(self.weights) - 1.0) > 1e-12:
            raise ValueError("mixture weights must sum to 1")
        if self.n_studies < 2:
            raise ValueError("need at least two studies")

    @property
    def sn_params(self) -> SkewNormalParams:
        return sn_from_moments(SkewNormalMoments(self.mu[0], self.tau2[0], self.skew))

    def describe(self) -> dict:
        """Flat row used by the ``list-scenarios`` table."""
        row = {
            "scenario_id": self.scenario_id,
            "type": self.re_kind,
            "mu": self.mu[0] if len(self.mu) == 1 else "",
            "tau2": self.tau2[0] if len(self.tau2) == 1 else "",
            "mu1": "", "mu2": "", "tau2_1": "", "tau2_2": "", "w1": "", "w2": "",
            "skewness": "", "xi": "", "omega": "", "shape": "",
            "n_studies": self.n_studies,
        }
        if self.re_kind == "skew-normal":
            p = self.sn_params
            row.update(skewness=self.skew, xi=round(p.xi, 4), omega=round(p.omega, 4),
                       shape=round(p.shape, 4))
        if self.re_kind == "mixture2":
            row.update(mu1=self.mu[0], mu2=self.mu[1], tau2_1=self.tau2[0],
                       tau2_2=self.tau2[1], w1=self.weights[0], w2=self.weights[1])
        return row


@dataclass(frozen=True)
class GenConfig:
    """Arm sizes are discrete-uniform on ``size_range``; control risks uniform on ``risk_range``."""

    size_range: tuple[int, int] = (50, 500)
    risk_range: tuple[float, float] = (0.05, 0.65)

    def __post_init__(self):
        lo, hi = self.size_range
        if not 1 <= lo < hi:
            raise ValueError("size_range must be increasing and positive")
        rlo, rhi = self.risk_range
        if not 0 < rlo < rhi < 1:
            raise ValueError("risk_range must lie inside (0, 1) and be increasing")


def builtin_scenarios() -> list[ScenarioSpec]:
    out = []
    sid = 1
    for kind in ("normal", "skew-normal"):
        skew = SCENARIO_SKEWNESS if kind == "skew-normal" else None
        for n in (14, 26):
            for mu in (0.0, 0.5):
                for tau2 in (0.12, 2.63):
                    out.append(ScenarioSpec(sid, kind, (mu,), (tau2,), n, skew=skew))
                    sid += 1
    for n in (14, 26):
        for tau2_2 in (0.005, 0.12, 2.63):
            out.append(
                ScenarioSpec(sid, "mixture2", (0.0, 1.0), (0.12, tau2_2), n, weights=(0.3, 0.7))
            )
            sid += 1
    return out


_SCENARIOS = {s.scenario_id: s for s in builtin_scenarios()}


def get_scenario(scenario_id: int) -> ScenarioSpec:
    try:
        return _SCENARIOS[int(scenario_id)]
    except KeyError:
        raise KeyError(f"unknown scenario {scenario_id}; valid ids are 1-22") from None


def draw_true_effects(s: ScenarioSpec, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw ``size`` (default ``s.n_studies``) study effects from the scenario distribution."""
    n = s.n_studies if size is None else size
    if s.re_kind == "normal":
        return s.mu[0] + np.sqrt(s.tau2[0]) * rng.standard_normal(n)
    if s.re_kind == "skew-normal":
        if s.tau2[0] == 0:
            return np.full(n, s.mu[0])
        return sample_sn(s.sn_params, rng, n)
    second = rng.random(n) < s.weights[1]
    mu = np.where(second, s.mu[1], s.mu[0])
    sd = np.sqrt(np.where(second, s.tau2[1], s.tau2[0]))
    return mu + sd * rng.standard_normal(n)


def risk_transform(rho_ctrl, theta):
    """Treatment-arm risk whose log odds exceed the control's by ``theta``."""
    rho_ctrl = np.asarray(rho_ctrl, dtype=float)
    if np.any((rho_ctrl <= 0) | (rho_ctrl >= 1)):
        raise ValueError("control risk must lie in (0, 1)")
    out = expit(logit(rho_ctrl) + np.asarray(theta, dtype=float))
    return out if out.ndim else float(out)


def generate_dataset(
    s: ScenarioSpec,
    g: GenConfig | None = None,
    rng: np.random.Generator | None = None,
    theta: np.ndarray | None = None,
) -> tuple[MetaDataset, np.ndarray]:
    """Simulate one meta-analysis; double-zero studies are dropped, not replaced.

    Returns the validated dataset and the true effects of the studies kept.
    ``theta`` overrides the random-effects draw.
    """
    g = g or GenConfig()
    rng = rng if rng is not None else np.random.default_rng()
    if theta is None:
        theta = draw_true_effects(s, rng)
    theta = np.asarray(theta, dtype=float)
    n = theta.size
    m = rng.integers(g.size_range[0], g.size_range[1], size=n, endpoint=True)
    rho_c = rng.uniform(g.risk_range[0], g.risk_range[1], size=n)
    c = rng.binomial(m, rho_c)
    t = rng.binomial(m, risk_transform(rho_c, theta))
    d = MetaDataset.from_arrays(t, m, c, m, true_effects=theta)
    d, _ = validate_dataset(d)
    return d, d.true_effects
