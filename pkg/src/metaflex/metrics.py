"""Simulation performance measures: bias, coverage, MSE and their relative forms."""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields
from typing import Hashable, Mapping, Sequence

import numpy as np

from .core import FitResult
from .datagen import ScenarioSpec

__all__ = [
    "PerformanceRow",
    "PERFORMANCE_COLUMNS",
    "ESTIMANDS",
    "CONVERGENCE_FLOOR",
    "true_moments",
    "aggregate",
    "coverage_band",
    "ExclusionEntry",
    "apply_exclusion_rule",
    "excluded_row",
]

ESTIMANDS = ("mu", "tau2", "study_effects")

#: Minimum converged fraction for a (scenario, model) pair to be reported.
CONVERGENCE_FLOOR = 0.95


@dataclass(frozen=True)
class PerformanceRow:
    """Aggregated performance of one model on one scenario for one estimand.

    ``mean_bias`` is signed; ``abs_mean_bias`` is its absolute value.
    ``pct_bias`` and ``normalized_mse`` are only defined for ``tau2``.
    """

    scenario_id: int
    model_id: str
    estimand: str
    mean_bias: float
    coverage: float
    mse: float
    pct_bias: float
    normalized_mse: float
    n_used: int
    n_failed: int
    excluded: bool
    abs_mean_bias: float

    def as_csv_row(self) -> list[str]:
        return [_fmt(x) for x in astuple(self)]


PERFORMANCE_COLUMNS = tuple(f.name for f in fields(PerformanceRow))


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return str(x)


def true_moments(s: ScenarioSpec) -> tuple[float, float]:
    """Overall mean and variance of a scenario's true random-effects distribution."""
    if s.re_kind in ("normal", "skew-normal"):
        return float(s.mu[0]), float(s.tau2[0])
    (w1, w2), (m1, m2), (t1, t2) = s.weights, s.mu, s.tau2
    return w1 * m1 + w2 * m2, w1 * t1 + w2 * t2 + w1 * w2 * (m1 - m2) ** 2


def coverage_band(n_reps: int, level: float = 0.95) -> tuple[float, float]:
    """Monte-Carlo acceptance band ``level +/- 1.96 sqrt(level (1 - level) / n_reps)``."""
    if n_reps < 1:
        raise ValueError("n_reps must be at least 1")
    half = 1.96 * math.sqrt(level * (1.0 - level) / n_reps)
    return level - half, level + half


def _estimates(fits, truths, estimand):
    """Flatten estimates, truths and intervals for one estimand."""
    est, tru, lo, hi = [], [], [], []
    per_rep = []
    for f, t in zip(fits, truths):
        if estimand == "mu":
            e, ci = f.mu, f.mu_ci
        elif estimand == "tau2":
            e, ci = f.tau2, f.tau2_ci
        else:
            if f.theta is None:
                raise ValueError(f"{f.model_id} reports no study effects")
            th = np.asarray(t, dtype=float)
            d = np.asarray(f.theta, dtype=float) - th
            per_rep.append(d)
            est.extend(f.theta)
            tru.extend(th)
            if f.theta_ci is None:
                lo.extend([np.nan] * th.size)
                hi.extend([np.nan] * th.size)
            else:
                lo.extend(f.theta_ci[:, 0])
                hi.extend(f.theta_ci[:, 1])
            continue
        est.append(np.nan if e is None else e)
        tru.append(t)
        lo.append(np.nan if ci is None else ci[0])
        hi.append(np.nan if ci is None else ci[1])
        per_rep.append(np.array([est[-1] - t]))
    return (np.asarray(est, float), np.asarray(tru, float), np.asarray(lo, float),
            np.asarray(hi, float), per_rep)


def aggregate(
    fits: Sequence[FitResult],
    truths,
    estimand: str,
    *,
    scenario_id: int = 0,
    model_id: str | None = None,
    n_failed: int = 0,
) -> PerformanceRow:
    """Aggregate converged replicate fits into one performance row.

    ``truths`` is a scalar (same truth for every replicate) or one value per
    fit; for ``study_effects`` it is one vector of true effects per fit.  Study
    effect errors are averaged within each meta-analysis first and then
    across meta-analyses; coverage pools all study intervals.
    """
    if estimand not in ESTIMANDS:
        raise ValueError(f"estimand must be one of {ESTIMANDS}")
    fits = list(fits)
    if not fits:
        raise ValueError("no fits to aggregate")
    if estimand != "study_effects" and np.ndim(truths) == 0:
        truths = [float(truths)] * len(fits)
    truths = list(truths)
    if len(truths) != len(fits):
        raise ValueError("need one truth per fit")
    est, tru, lo, hi, per_rep = _estimates(fits, truths, estimand)
    if estimand == "study_effects":
        bias = float(np.mean([d.mean() for d in per_rep]))
        mse = float(np.mean([(d**2).mean() for d in per_rep]))
    else:
        diff = est - tru
        bias = float(diff.mean())
        mse = float((diff**2).mean())
    if np.isnan(lo).any() or np.isnan(hi).any():
        coverage = float("nan")
    else:
        coverage = float(np.mean((lo <= tru) & (tru <= hi)))
    pct = nmse = float("nan")
    if estimand == "tau2":
        t0 = float(np.mean(tru))
        if np.allclose(tru, t0) and t0 > 0:
            pct = bias / t0
            nmse = mse / t0**2
    return PerformanceRow(
        scenario_id=int(scenario_id),
        model_id=model_id if model_id is not None else fits[0].model_id,
        estimand=estimand,
        mean_bias=bias,
        coverage=coverage,
        mse=mse,
        pct_bias=pct,
        normalized_mse=nmse,
        n_used=len(fits),
        n_failed=int(n_failed),
        excluded=False,
        abs_mean_bias=abs(bias),
    )


def excluded_row(scenario_id, model_id, estimand, n_used, n_failed) -> PerformanceRow:
    """Placeholder row for a pair that failed the convergence floor (reported as NC)."""
    nan = float("nan")
    return PerformanceRow(int(scenario_id), model_id, estimand, nan, nan, nan, nan, nan,
                          int(n_used), int(n_failed), True, nan)


@dataclass(frozen=True)
class ExclusionEntry:
    attempted: int
    converged: int
    excluded: bool

    @property
    def failed(self) -> int:
        return self.attempted - self.converged

    @property
    def fraction(self) -> float:
        return self.converged / self.attempted if self.attempted else float("nan")


def apply_exclusion_rule(
    results: Mapping[Hashable, Sequence[FitResult | None]],
    floor: float = CONVERGENCE_FLOOR,
) -> tuple[dict[Hashable, list[FitResult]], dict[Hashable, ExclusionEntry]]:
    """Drop non-converged replicates and flag pairs whose converged share is below ``floor``.

    ``results`` maps a (scenario, model) key to its replicate fits, with
    ``None`` standing for a replicate whose fitter raised.  Excluded pairs map
    to an empty list.
    """
    kept, log = {}, {}
    for key, fits in results.items():
        good = [f for f in fits if f is not None and f.converged]
        attempted = len(fits)
        # integer comparison so 950/1000 sits exactly on the floor
        excluded = attempted == 0 or len(good) * 10_000 < round(floor * 10_000) * attempted
        log[key] = ExclusionEntry(attempted, len(good), excluded)
        kept[key] = [] if excluded else good
    return kept, log
