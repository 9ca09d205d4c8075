"""Command-line front end.

Exit status: 0 success, 1 usage error, 2 data error, 3 a single fit that did
not converge (its JSON is still written).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .bayes import DESK_CONFIG, McmcConfig
from .core import MODEL_IDS, DataError, get_model_spec, read_arm_csv, validate_dataset
from .datagen import builtin_scenarios
from .fitting import fit_model
from .plotting import render_forest, render_panel, to_string
from .simharness import (
    MANIFEST_FILE,
    PERFORMANCE_FILE,
    RunPlan,
    default_workers,
    performance_table,
    read_run,
    run_plan,
    scenarios_from,
    write_performance,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NONCONVERGED = 0, 1, 2, 3

SCENARIO_COLUMNS = (
    "scenario_id", "type", "mu", "tau2", "mu1", "mu2", "tau2_1", "tau2_2", "w1", "w2",
    "skewness", "xi", "omega", "shape", "n_studies",
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_mcmc(p):
    g = p.add_argument_group("MCMC (Bayesian models)")
    g.add_argument("--chains", type=int, default=DESK_CONFIG.n_chains)
    g.add_argument("--iter", type=int, default=DESK_CONFIG.n_iter, help="iterations per chain")
    g.add_argument("--burn-in", type=int, default=DESK_CONFIG.burn_in)
    g.add_argument("--thin", type=int, default=1)
    g.add_argument("--rhat", type=float, default=1.05, help="R-hat convergence threshold")


def _mcmc(args) -> McmcConfig:
    try:
        return McmcConfig(n_chains=args.chains, n_iter=args.iter, burn_in=args.burn_in,
                          thin=args.thin, rhat_threshold=args.rhat)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="metaflex", description="Random-effects meta-analysis of binary outcomes.")
    p.add_argument("--version", action="version", version=f"metaflex {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    sub.add_parser("list-scenarios", help="print the 22 simulation scenarios as CSV")
    sub.add_parser("list-models", help="print the available model ids")

    f = sub.add_parser("fit", help="fit one model to an arm-level CSV")
    f.add_argument("--data", required=True, help="CSV with study_id,events_trt,n_trt,events_ctrl,n_ctrl")
    f.add_argument("--model", required=True)
    f.add_argument("--cc", type=float, default=0.5, help="continuity correction for zero cells")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", help="write JSON here instead of stdout")
    f.add_argument("--forest", help="write a forest plot SVG here")
    _add_mcmc(f)

    s = sub.add_parser("simulate", help="run a simulation study")
    s.add_argument("--scenarios", required=True, help="comma-separated ids, e.g. 1,17")
    s.add_argument("--models", required=True, help="comma-separated model ids, or 'all'")
    s.add_argument("--reps", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: METAFLEX_WORKERS or 1)")
    s.add_argument("--cc", type=float, default=0.5)
    s.add_argument("--record-runtime", action="store_true",
                   help="fill runtime_ms in the per-rep table (makes it run-dependent)")
    _add_mcmc(s)

    m = sub.add_parser("summarize", help="aggregate a simulation directory")
    m.add_argument("--in", dest="in_dir", required=True)
    m.add_argument("--plots", action="store_true", help="also write bias/coverage SVG panels")
    return p


def _cmd_list_scenarios(args, out):
    w = csv.DictWriter(out, fieldnames=SCENARIO_COLUMNS, lineterminator="\n")
    w.writeheader()
    for s in builtin_scenarios():
        w.writerow(s.describe())
    return EXIT_OK


def _cmd_list_models(args, out):
    for mid in MODEL_IDS:
        out.write(mid + "\n")
    return EXIT_OK


def _cmd_fit(args, out):
    try:
        spec = get_model_spec(args.model)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    cfg = _mcmc(args)
    d = read_arm_csv(args.data)
    d, report = validate_dataset(d)
    for r in report:
        logging.getLogger("metaflex").warning("excluded study %s: %s", r["study_id"], r["reason"])
    fit = fit_model(spec.model_id, d, cc=args.cc, mcmc=cfg, rng=args.seed, seed=args.seed)
    if report:
        fit.notes.append(f"excluded studies: {', '.join(r['study_id'] for r in report)}")
    text = fit.to_json(indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        out.write(text)
    if args.forest:
        Path(args.forest).write_text(to_string(render_forest(d, fit, cc=args.cc)), encoding="utf-8")
    return EXIT_OK if fit.converged else EXIT_NONCONVERGED


def _cmd_simulate(args, out):
    models = MODEL_IDS if args.models.strip().lower() == "all" else tuple(
        m.strip() for m in args.models.split(",") if m.strip()
    )
    try:
        plan = RunPlan(
            scenario_ids=scenarios_from(args.scenarios),
            model_ids=models,
            n_reps=args.reps,
            master_seed=args.seed,
            mcmc=_mcmc(args),
            workers=args.workers or default_workers(),
            out_dir=args.out,
            cc=args.cc,
            record_runtime=args.record_runtime,
        )
    except (KeyError, ValueError) as exc:
        raise UsageError(exc.args[0] if exc.args else str(exc)) from None
    _, perf, manifest = run_plan(plan)
    out.write(f"wrote {args.out} ({len(perf)} performance rows, {manifest.wall_clock_s:.1f} s)\n")
    return EXIT_OK


def _cmd_summarize(args, out):
    in_dir = Path(args.in_dir)
    if not (in_dir / "reps.csv").exists():
        raise UsageError(f"{in_dir} has no reps.csv")
    reps, effects = read_run(in_dir)
    perf, _ = performance_table(reps, effects)
    write_performance(perf, in_dir / PERFORMANCE_FILE)
    with open(in_dir / PERFORMANCE_FILE, encoding="utf-8") as fh:
        out.write(fh.read())
    if args.plots:
        n_reps = None
        if (in_dir / MANIFEST_FILE).exists():
            n_reps = json.loads((in_dir / MANIFEST_FILE).read_text())["plan"]["n_reps"]
        panels = [("mean_bias", "mu"), ("coverage", "mu"), ("mean_bias", "tau2"),
                  ("pct_bias", "tau2"), ("coverage", "tau2"), ("normalized_mse", "tau2"),
                  ("mean_bias", "study_effects")]
        for metric, est in panels:
            svg = render_panel(perf, metric, est, n_reps=n_reps)
            (in_dir / f"{metric}_{est}.svg").write_text(to_string(svg), encoding="utf-8")
    return EXIT_OK


_COMMANDS = {
    "list-scenarios": _cmd_list_scenarios,
    "list-models": _cmd_list_models,
    "fit": _cmd_fit,
    "simulate": _cmd_simulate,
    "summarize": _cmd_summarize,
}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().strip())
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return _COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


dispatch = main

if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
