"""Command line front end: ``simulate``, ``fit`` and ``study``.

Exit codes: 0 success (including fits that did not converge, which are
flagged), 2 usage, config or data-format error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import time
import warnings

from .baselines import fit_naive, fit_one_directional_em
from .dataio import (
    ConfigError,
    DataFormatError,
    atomic_write_text,
    load_scenario_config,
    now,
    read_dataset_csv,
    write_dataset_csv,
    write_manifest,
)
from .em import EmConfig, fit_em
from .mcmc import McmcConfig, PriorSpec, sample_posterior, summarize_posterior, write_draws
from .simulation import METHODS, generate_dataset, preset, run_study

EXIT_USAGE = 2
EXIT_IO = 3


class UsageError(Exception):
    pass


def _scenario_from_args(args):
    if args.config and args.setting:
        raise UsageError("give either --setting or --config, not both")
    if args.config:
        scenario = load_scenario_config(args.config)
    elif args.setting:
        scenario = preset(f"setting{args.setting}")
    else:
        raise UsageError("one of --setting or --config is required")
    if args.seed is not None:
        scenario = scenario.replace(seed=args.seed)
    return scenario


def cmd_simulate(args):
    started, t0 = now(), time.perf_counter()
    scenario = _scenario_from_args(args)
    gen = generate_dataset(scenario, args.replicate_index)
    write_dataset_csv(args.out, gen.data, gen.y_true if args.with_truth else None)
    config = scenario.to_dict() | {"replicate_index": args.replicate_index,
                                   "with_truth": bool(args.with_truth)}
    write_manifest(args.out + ".manifest.json", "simulate", config, scenario.seed,
                   [args.out], started, time.perf_counter() - t0)
    print(f"wrote {gen.data.n} rows to {args.out} "
          f"(P(Y=1)={gen.prevalence:.3f}, sens={gen.sensitivity:.3f}, "
          f"spec={gen.specificity:.3f})")
    return 0


def _em_config(args):
    return EmConfig(max_iter=args.max_iter, loglik_tol=args.loglik_tol,
                    param_tol=args.param_tol, init=args.init, n_starts=args.starts,
                    seed=args.seed if args.seed is not None else 0)


def cmd_fit(args):
    started, t0 = now(), time.perf_counter()
    method = args.method
    config = {"data": os.path.abspath(args.data), "method": method}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        data, _ = read_dataset_csv(args.data)
        if method == "em":
            cfg = _em_config(args)
            config["em"] = {k: v for k, v in dataclasses.asdict(cfg).items()}
            result = fit_em(data, cfg)
        elif method in ("perfect-spec", "perfect-sens"):
            cfg = _em_config(args)
            config["em"] = dataclasses.asdict(cfg)
            fixed = "specificity" if method == "perfect-spec" else "sensitivity"
            result = fit_one_directional_em(data, fixed, cfg)
        elif method == "naive":
            result = fit_naive(data)
        else:
            prior = PriorSpec.parse(args.prior)
            cfg = McmcConfig(chains=args.chains, iterations=args.iterations,
                             burn_in=args.burn_in, thin=args.thin,
                             seed=args.seed if args.seed is not None else 0, jobs=args.jobs)
            config["prior"] = prior.to_dict()
            config["mcmc"] = dataclasses.asdict(cfg)
            sample = sample_posterior(data, prior, cfg)
            result = summarize_posterior(sample)
            if args.dump_draws:
                write_draws(sample, args.dump_draws)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    if not result.converged:
        print(f"warning: {method} fit did not converge; estimates flagged converged=false",
              file=sys.stderr)
    out = args.out or f"{os.path.splitext(args.data)[0]}.{method}.json"
    atomic_write_text(out, result.to_json(indent=2) + "\n")
    write_manifest(out + ".manifest.json", "fit", config, args.seed, [out], started,
                   time.perf_counter() - t0)
    print(result.summary_table())
    return 0


def cmd_study(args):
    started, t0 = now(), time.perf_counter()
    scenario = _scenario_from_args(args)
    changes = {}
    if args.replicates is not None:
        if args.replicates < 1:
            raise UsageError("--replicates must be at least 1")
        changes["n_realizations"] = args.replicates
    if args.methods:
        methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
        bad = [m for m in methods if m not in METHODS]
        if bad:
            raise UsageError(f"unknown methods {bad}; choose from {list(METHODS)}")
        changes["estimators"] = methods
    if args.prior:
        changes["prior"] = PriorSpec.parse(args.prior)
    scenario = scenario.replace(**changes)

    progress = None
    if args.verbose:
        progress = lambda i: print(f"replicate {i + 1}/{scenario.n_realizations}",
                                   file=sys.stderr)
    report = run_study(scenario, jobs=args.jobs, progress=progress)

    out_dir = args.out_dir or f"study_{scenario.name}"
    os.makedirs(out_dir, exist_ok=True)
    table = os.path.join(out_dir, "table.txt")
    rows = os.path.join(out_dir, "replicates.csv")
    summary = os.path.join(out_dir, "summary.json")
    atomic_write_text(table, report.format_table() + "\n")
    report.write_csv(rows)
    report.write_json(summary)
    write_manifest(os.path.join(out_dir, "manifest.json"), "study", scenario.to_dict(),
                   scenario.seed, [table, rows, summary], started, time.perf_counter() - t0)
    print(report.format_table())
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="binmisclass",
        description="Logistic regression with a misclassified binary outcome.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate one simulated dataset")
    s.add_argument("--setting", choices=["1", "2", "3"])
    s.add_argument("--config", help="TOML scenario file")
    s.add_argument("--seed", type=int)
    s.add_argument("--replicate-index", type=int, default=0)
    s.add_argument("--out", default="dataset.csv")
    s.add_argument("--with-truth", action="store_true", help="add a y_true column")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="fit one dataset")
    f.add_argument("--data", required=True)
    f.add_argument("--method", required=True, choices=list(METHODS))
    f.add_argument("--out", help="FitResult JSON path")
    f.add_argument("--seed", type=int)
    f.add_argument("--max-iter", type=int, default=1500)
    f.add_argument("--loglik-tol", type=float, default=1e-7)
    f.add_argument("--param-tol", type=float, default=1e-6)
    f.add_argument("--init", choices=["naive-start", "random-starts"], default="naive-start")
    f.add_argument("--starts", type=int, default=5)
    f.add_argument("--prior", default="uniform:-10,10",
                   help="family:params, e.g. uniform:-10,10 normal:0,10 t:0,2.5,3")
    f.add_argument("--chains", type=int, default=4)
    f.add_argument("--iterations", type=int, default=8000)
    f.add_argument("--burn-in", type=int, default=3000)
    f.add_argument("--thin", type=int, default=1)
    f.add_argument("--jobs", type=int, default=1)
    f.add_argument("--dump-draws", metavar="DIR", help="write per-chain draw CSVs")
    f.set_defaults(func=cmd_fit)

    st = sub.add_parser("study", help="run a Monte Carlo simulation study")
    st.add_argument("--setting", choices=["1", "2", "3"])
    st.add_argument("--config", help="TOML scenario file")
    st.add_argument("--seed", type=int)
    st.add_argument("--replicates", type=int)
    st.add_argument("--methods", help=f"comma list from {','.join(METHODS)}")
    st.add_argument("--prior")
    st.add_argument("--jobs", type=int, default=1)
    st.add_argument("--out-dir")
    st.add_argument("--verbose", action="store_true")
    st.set_defaults(func=cmd_study)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, DataFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
