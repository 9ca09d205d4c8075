"""Scenario x model x replicate simulation runs with deterministic seeding.

Every random stream is derived from ``(master_seed, scenario, rep, purpose,
chain)`` alone, so results do not depend on worker count or completion order.
Purpose 0 generates the dataset; purpose ``1 + k`` belongs to the k-th model of
the registry.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .bayes import DESK_CONFIG, McmcConfig
from .core import MODEL_IDS, DataError, FitResult, get_model_spec
from .datagen import GenConfig, generate_dataset, get_scenario
from .fitting import fit_model
from .metrics import (
    ESTIMANDS,
    PERFORMANCE_COLUMNS,
    PerformanceRow,
    aggregate,
    apply_exclusion_rule,
    excluded_row,
    true_moments,
)

__all__ = [
    "REP_COLUMNS",
    "EFFECT_COLUMNS",
    "RunPlan",
    "RunManifest",
    "seed_stream",
    "run_plan",
    "performance_table",
    "read_run",
    "write_performance",
]

log = logging.getLogger(__name__)

REP_COLUMNS = (
    "scenario_id", "rep", "model_id", "mu_hat", "mu_lo", "mu_hi", "tau2_hat", "tau2_lo",
    "tau2_hi", "converged", "rhat_max", "n_studies_used", "runtime_ms",
)
EFFECT_COLUMNS = (
    "scenario_id", "rep", "model_id", "study_id", "theta_true", "theta_hat", "theta_lo", "theta_hi",
)

REPS_FILE = "reps.csv"
EFFECTS_FILE = "study_effects.csv"
PERFORMANCE_FILE = "performance.csv"
MANIFEST_FILE = "manifest.json"
TIMINGS_FILE = "timings.csv"


def seed_stream(master, scenario_id: int, rep: int, chain: int = 0, purpose: int = 0) -> np.random.Generator:
    """Independent counter-based (Philox) stream for one ``(scenario, rep, purpose, chain)`` tuple."""
    ss = np.random.SeedSequence(int(master), spawn_key=(int(scenario_id), int(rep), int(purpose), int(chain)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class RunPlan:
    scenario_ids: tuple[int, ...]
    model_ids: tuple[str, ...]
    n_reps: int
    master_seed: int = 0
    mcmc: McmcConfig = DESK_CONFIG
    workers: int = 1
    out_dir: str | None = None
    gen: GenConfig = field(default_factory=GenConfig)
    cc: float = 0.5
    record_runtime: bool = False

    def __post_init__(self):
        if self.n_reps < 1:
            raise ValueError("n_reps must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if not self.scenario_ids or not self.model_ids:
            raise ValueError("need at least one scenario and one model")
        for s in self.scenario_ids:
            get_scenario(s)
        canon = tuple(get_model_spec(m).model_id for m in self.model_ids)
        object.__setattr__(self, "scenario_ids", tuple(int(s) for s in self.scenario_ids))
        object.__setattr__(self, "model_ids", canon)
        if self.out_dir is not None:
            object.__setattr__(self, "out_dir", str(self.out_dir))

    def echo(self) -> dict:
        d = asdict(self)
        d["mcmc"] = {k: v for k, v in asdict(self.mcmc).items() if k != "init_steps"}
        d["gen"] = asdict(self.gen)
        return d


@dataclass
class RunManifest:
    plan: dict
    version: str
    timestamp: str
    convergence: dict[str, dict]
    wall_clock_s: float
    datasets_with_exclusions: int = 0
    files: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


# ----------------------------------------------------------------------------
# one replicate
# ----------------------------------------------------------------------------


def _num(x) -> str:
    if x is None:
        return ""
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def _rep_row(scenario_id, rep, model_id, fit: FitResult | None, n_used, runtime_ms, record_runtime):
    row = dict.fromkeys(REP_COLUMNS, "")
    row.update(scenario_id=str(scenario_id), rep=str(rep), model_id=model_id,
               n_studies_used=str(n_used), converged="false")
    if fit is not None:
        row["mu_hat"] = _num(fit.mu)
        if fit.mu_ci is not None:
            row["mu_lo"], row["mu_hi"] = _num(fit.mu_ci[0]), _num(fit.mu_ci[1])
        row["tau2_hat"] = _num(fit.tau2)
        if fit.tau2_ci is not None:
            row["tau2_lo"], row["tau2_hi"] = _num(fit.tau2_ci[0]), _num(fit.tau2_ci[1])
        row["converged"] = "true" if fit.converged else "false"
        row["rhat_max"] = _num(fit.diagnostics.get("rhat_max"))
    if record_runtime:
        row["runtime_ms"] = f"{runtime_ms:.0f}"
    return row


def _run_replicate(plan: RunPlan, scenario_id: int, rep: int):
    """Generate one dataset and fit every requested model to it."""
    s = get_scenario(scenario_id)
    rows, effects, timings = [], [], []
    try:
        d, theta = generate_dataset(s, plan.gen, seed_stream(plan.master_seed, scenario_id, rep))
    except DataError as exc:
        log.warning("scenario %s rep %s: %s", scenario_id, rep, exc)
        for mid in plan.model_ids:
            rows.append(_rep_row(scenario_id, rep, mid, None, 0, 0.0, plan.record_runtime))
        return rows, effects, timings, 0
    dropped = int(s.n_studies - len(d))
    for mid in plan.model_ids:
        purpose = 1 + MODEL_IDS.index(mid)
        chains = [seed_stream(plan.master_seed, scenario_id, rep, c, purpose)
                  for c in range(plan.mcmc.n_chains + 1)]
        em_seed = int(seed_stream(plan.master_seed, scenario_id, rep, 0, purpose).integers(2**31))
        t0 = time.perf_counter()
        try:
            fit = fit_model(mid, d, cc=plan.cc, mcmc=plan.mcmc, rng=chains, seed=em_seed)
        except Exception as exc:  # failures are data, not aborts
            log.warning("scenario %s rep %s model %s failed: %s", scenario_id, rep, mid, exc)
            fit = None
        ms = 1e3 * (time.perf_counter() - t0)
        timings.append((scenario_id, rep, mid, ms))
        rows.append(_rep_row(scenario_id, rep, mid, fit, len(d), ms, plan.record_runtime))
        if fit is not None and fit.theta is not None:
            lo_hi = fit.theta_ci if fit.theta_ci is not None else np.full((theta.size, 2), np.nan)
            for sid, tt, th, (lo, hi) in zip(d.study_ids, theta, fit.theta, lo_hi):
                effects.append({
                    "scenario_id": str(scenario_id), "rep": str(rep), "model_id": mid,
                    "study_id": sid, "theta_true": _num(tt), "theta_hat": _num(th),
                    "theta_lo": _num(lo), "theta_hi": _num(hi),
                })
    return rows, effects, timings, int(dropped > 0)


def _task(args):
    return _run_replicate(*args)


# ----------------------------------------------------------------------------
# aggregation
# ----------------------------------------------------------------------------


def _f(x: str):
    return float(x) if x != "" else None


def _fits_from_rows(rep_rows, effect_rows):
    """Rebuild light FitResults (plus true effects) from the per-rep tables."""
    by_key = {}
    for r in effect_rows:
        key = (int(r["scenario_id"]), int(r["rep"]), r["model_id"])
        by_key.setdefault(key, []).append(r)
    results: dict[tuple[int, str], list] = {}
    true_theta: dict[tuple[int, str], list] = {}
    for r in rep_rows:
        s, rep, mid = int(r["scenario_id"]), int(r["rep"]), r["model_id"]
        results.setdefault((s, mid), [])
        true_theta.setdefault((s, mid), [])
        if r["mu_hat"] == "":
            results[(s, mid)].append(None)
            true_theta[(s, mid)].append(None)
            continue
        eff = by_key.get((s, rep, mid))
        theta = theta_ci = tt = None
        if eff:
            theta = [float(e["theta_hat"]) for e in eff]
            tt = [float(e["theta_true"]) for e in eff]
            if all(e["theta_lo"] != "" for e in eff):
                theta_ci = [[float(e["theta_lo"]), float(e["theta_hi"])] for e in eff]
        ci = lambda a, b: (float(r[a]), float(r[b])) if r[a] != "" else None  # noqa: E731
        fit = FitResult(
            model_id=mid, mu=float(r["mu_hat"]), mu_ci=ci("mu_lo", "mu_hi"),
            tau2=_f(r["tau2_hat"]), tau2_ci=ci("tau2_lo", "tau2_hi"),
            theta=theta, theta_ci=theta_ci, converged=r["converged"] == "true",
        )
        results[(s, mid)].append(fit)
        true_theta[(s, mid)].append(tt)
    return results, true_theta


def performance_table(rep_rows, effect_rows=()) -> tuple[list[PerformanceRow], dict]:
    """Apply the convergence gate and aggregate every (scenario, model, estimand)."""
    results, true_theta = _fits_from_rows(rep_rows, effect_rows)
    kept, gate = apply_exclusion_rule(results)
    out = []
    for (s, mid) in sorted(results, key=lambda k: (k[0], k[1])):
        entry = gate[(s, mid)]
        mu_true, tau2_true = true_moments(get_scenario(s))
        fits = kept[(s, mid)]
        for est in ESTIMANDS:
            if entry.excluded:
                out.append(excluded_row(s, mid, est, entry.converged, entry.failed))
                continue
            if est == "tau2" and any(f.tau2 is None for f in fits):
                continue
            if est == "study_effects":
                pairs = [(f, t) for f, t in zip(results[(s, mid)], true_theta[(s, mid)])
                         if f is not None and f.converged]
                if not pairs or any(f.theta is None for f, _ in pairs):
                    continue
                out.append(aggregate([f for f, _ in pairs], [t for _, t in pairs], est,
                                     scenario_id=s, model_id=mid, n_failed=entry.failed))
                continue
            truth = mu_true if est == "mu" else tau2_true
            out.append(aggregate(fits, truth, est, scenario_id=s, model_id=mid,
                                 n_failed=entry.failed))
    return out, gate


def write_performance(rows: Iterable[PerformanceRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PERFORMANCE_COLUMNS)
        for r in rows:
            w.writerow(r.as_csv_row())


def _write_dicts(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def read_run(in_dir) -> tuple[list[dict], list[dict]]:
    """Read the per-rep and study-effect tables written by :func:`run_plan`."""
    in_dir = Path(in_dir)
    with open(in_dir / REPS_FILE, newline="", encoding="utf-8") as fh:
        reps = list(csv.DictReader(fh))
    effects = []
    if (in_dir / EFFECTS_FILE).exists():
        with open(in_dir / EFFECTS_FILE, newline="", encoding="utf-8") as fh:
            effects = list(csv.DictReader(fh))
    return reps, effects


# ----------------------------------------------------------------------------
# driver
# ----------------------------------------------------------------------------


def run_plan(p: RunPlan):
    """Run the plan and, when ``p.out_dir`` is set, persist every table.

    Returns ``(rep_rows, performance_rows, manifest)``.  Rows are sorted by
    scenario, replicate and model id whatever order the workers finish in.
    """
    t0 = time.perf_counter()
    tasks = [(p, s, r) for s in p.scenario_ids for r in range(p.n_reps)]
    if p.workers == 1 or len(tasks) == 1:
        outputs = [_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=p.workers) as ex:
            outputs = list(ex.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * p.workers))))
    rep_rows, effect_rows, timings = [], [], []
    n_dropped = 0
    for rows, effects, times, dropped in outputs:
        rep_rows += rows
        effect_rows += effects
        timings += times
        n_dropped += dropped
    rep_rows.sort(key=lambda r: (int(r["scenario_id"]), int(r["rep"]), r["model_id"]))
    effect_rows.sort(key=lambda r: (int(r["scenario_id"]), int(r["rep"]), r["model_id"]))
    timings.sort(key=lambda t: (t[0], t[1], t[2]))
    perf, gate = performance_table(rep_rows, effect_rows)
    manifest = RunManifest(
        plan=p.echo(),
        version=__version__,
        timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        convergence={
            f"{s}|{m}": {"attempted": e.attempted, "converged": e.converged, "excluded": e.excluded}
            for (s, m), e in sorted(gate.items())
        },
        wall_clock_s=round(time.perf_counter() - t0, 3),
        datasets_with_exclusions=n_dropped,
    )
    if p.out_dir is not None:
        out = Path(p.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_dicts(out / REPS_FILE, REP_COLUMNS, rep_rows)
        _write_dicts(out / EFFECTS_FILE, EFFECT_COLUMNS, effect_rows)
        write_performance(perf, out / PERFORMANCE_FILE)
        with open(out / TIMINGS_FILE, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["scenario_id", "rep", "model_id", "runtime_ms"])
            for s, r, m, ms in timings:
                w.writerow([s, r, m, f"{ms:.1f}"])
        manifest.files = {k: k for k in (REPS_FILE, EFFECTS_FILE, PERFORMANCE_FILE, TIMINGS_FILE)}
        (out / MANIFEST_FILE).write_text(manifest.to_json() + "\n", encoding="utf-8")
    return rep_rows, perf, manifest


def default_workers() -> int:
    """Worker count from ``METAFLEX_WORKERS``, else 1."""
    try:
        return max(1, int(os.environ.get("METAFLEX_WORKERS", "1")))
    except ValueError:
        return 1


def with_mcmc(p: RunPlan, cfg: McmcConfig) -> RunPlan:
    return replace(p, mcmc=cfg)


def scenarios_from(spec: Sequence[int] | str) -> tuple[int, ...]:
    if isinstance(spec, str):
        return tuple(int(x) for x in spec.split(",") if x.strip())
    return tuple(int(x) for x in spec)
