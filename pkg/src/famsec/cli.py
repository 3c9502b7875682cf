"""Command-line driver: ``famsec solve|assess|train|sweep``.

Data goes to files or stdout, diagnostics to stderr. Exit codes: 0 success,
2 bad input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from . import __version__
from .delivery import FEATURE_NAMES, build_mdp, enumerate_configs, features, load_config, load_sweep
from .exceptions import ConfigError, InvalidInputError, NumericalError
from .mdp import _thread_count, candidate_solve, trusted_solve
from .outcome import XoParams, assess_outcome
from .quality import (
    DEFAULT_BETA,
    FigureOfMerit,
    assess_solver_quality,
    derive_seed,
    fit_surrogate,
    generate_training_data,
    write_training_csv,
)
from .report import assemble_report, serialize_report, write_text_atomic
from .surrogate import GaussianProcessSurrogate

log = logging.getLogger("famsec")

EXIT_INPUT = 2
EXIT_NUMERICAL = 3

SUMMARY_HEADER = ["task_id", *FEATURE_NAMES, "x_o", "x_q"]


def _require_file(path, flag):
    if path is None:
        raise InvalidInputError(f"{flag} is required")
    if not os.path.isfile(path):
        raise InvalidInputError(f"{flag}: no such file {path!r}")
    return path


def _require_out_dir(path):
    if path is None:
        raise InvalidInputError("--out is required")
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise InvalidInputError(f"--out: parent directory {parent!r} does not exist")
    os.makedirs(path, exist_ok=True)
    return path


def _check_out_file(path):
    if path is not None and not os.path.isdir(os.path.dirname(os.path.abspath(path))):
        raise InvalidInputError(f"--out: directory for {path!r} does not exist")
    return path


def _solve(mdp, budget):
    if budget is None:
        return trusted_solve(mdp)
    if budget < 0:
        raise InvalidInputError("--budget must be >= 0")
    return candidate_solve(mdp, budget)


def _file_digest(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _xo_params(args):
    return XoParams(r_bar=args.rbar, moment_order=args.moment_order, alpha=args.alpha)


def _assess_one(config, task_id, args, seed, model, surrogate_digest, n_jobs=None):
    mdp = build_mdp(config)
    res = _solve(mdp, args.budget)
    outcome, samples = assess_outcome(mdp, res, _xo_params(args), args.rollouts, seed, n_jobs=n_jobs)
    feats = features(config)
    quality = None
    if model is not None:
        quality = assess_solver_quality(model, FigureOfMerit.from_samples(samples), feats, beta=args.beta)
    provenance = {
        "master_seed": seed,
        "n_rollouts": args.rollouts,
        "horizon": samples.horizon,
        "solver": res.solver_label,
        "solver_converged": res.converged,
        "solver_iterations": res.iterations,
    }
    if surrogate_digest is not None:
        provenance["surrogate_sha256"] = surrogate_digest
    return assemble_report(
        task_id, config, feats, outcome, samples, quality, n_bins=args.bins, provenance=provenance
    )


def cmd_solve(args):
    config = load_config(_require_file(args.config, "--config"))
    _check_out_file(args.out)
    mdp = build_mdp(config)
    res = _solve(mdp, args.budget)
    summary = res.summary(mdp.initial_state)
    summary["n_states"] = mdp.n_states
    text = serialize_report(summary)
    sys.stdout.write(text)
    if args.out:
        write_text_atomic(args.out, text)
    return 0


def _load_surrogate(path):
    if path is None:
        return None, None
    _require_file(path, "--surrogate")
    return GaussianProcessSurrogate.load(path), _file_digest(path)


def cmd_assess(args):
    path = _require_file(args.config, "--config")
    _check_out_file(args.out)
    config = load_config(path)
    model, digest = _load_surrogate(args.surrogate)
    task_id = os.path.splitext(os.path.basename(path))[0]
    report = _assess_one(config, task_id, args, args.seed, model, digest)
    text = serialize_report(report)
    if args.out:
        write_text_atomic(args.out, text)
        log.info("wrote %s", args.out)
    else:
        sys.stdout.write(text)
    return 0


def cmd_train(args):
    sweep = load_sweep(_require_file(args.sweep, "--sweep"))
    out = _require_out_dir(args.out)
    configs = enumerate_configs(sweep)
    log.info("training on %d configurations", len(configs))
    records = generate_training_data(configs, n_rollouts=args.rollouts, master_seed=args.seed)
    model = fit_surrogate(records)
    write_training_csv(records, os.path.join(out, "training.csv"))
    write_text_atomic(os.path.join(out, "surrogate.json"), serialize_report(model.to_dict()))
    log.info(
        "selected signal_variance=%g length_scale=%g noise_variance=%g",
        model.signal_variance_, model.length_scale_, model.noise_variance_,
    )
    return 0


def cmd_sweep(args):
    sweep = load_sweep(_require_file(args.sweep, "--sweep"))
    model, digest = _load_surrogate(args.surrogate)
    out = _require_out_dir(args.out)
    reports_dir = os.path.join(out, "reports")
    os.makedirs(reports_dir, exist_ok=True)
    configs = enumerate_configs(sweep)
    n_jobs = _thread_count()

    def job(i):
        task_id = f"task_{i:03d}"
        inner = None if n_jobs == 1 else 1
        rep = _assess_one(configs[i], task_id, args, derive_seed(args.seed, i), model, digest, inner)
        write_text_atomic(os.path.join(reports_dir, f"{task_id}.json"), serialize_report(rep))
        return rep

    if n_jobs == 1:
        reports = [job(i) for i in range(len(configs))]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            reports = list(pool.map(job, range(len(configs))))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for rep in reports:
        x_q = "" if rep.solver_quality is None else repr(rep.solver_quality.x_q)
        w.writerow([rep.task_id, *(repr(v) for v in rep.features.values), repr(rep.outcome.x_o), x_q])
    write_text_atomic(os.path.join(out, "summary.csv"), buf.getvalue())
    log.info("wrote %d reports to %s", len(reports), out)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="famsec", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"famsec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, seed=True, rollouts=2000):
        if seed:
            p.add_argument("--seed", type=int, required=True, help="master RNG seed (required)")
        p.add_argument("--rollouts", type=int, default=rollouts, help="Monte Carlo rollouts per task")

    def assess_opts(p):
        p.add_argument("--rbar", type=float, default=0.0, help="minimally acceptable return")
        p.add_argument("--budget", type=int, default=None,
                       help="value-iteration sweeps for a candidate solver (default: trusted, run to convergence)")
        p.add_argument("--surrogate", help="surrogate model JSON from 'famsec train'")
        p.add_argument("--alpha", type=float, default=1.0, help="outcome logistic sharpness")
        p.add_argument("--beta", type=float, default=DEFAULT_BETA, help="solver-quality logistic sharpness")
        p.add_argument("--moment-order", type=int, default=1, dest="moment_order")
        p.add_argument("--bins", type=int, default=20, help="histogram bins")

    p = sub.add_parser("solve", help="solve a task and print a summary")
    p.add_argument("--config", required=True)
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("assess", help="write a competency report for one task")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="report path (default: stdout)")
    common(p)
    assess_opts(p)
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("train", help="fit a trusted-solver surrogate over a sweep")
    p.add_argument("--sweep", required=True)
    p.add_argument("--out", required=True, help="output directory")
    common(p, rollouts=500)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="assess every configuration of a sweep")
    p.add_argument("--sweep", required=True)
    p.add_argument("--out", required=True, help="output directory")
    common(p)
    assess_opts(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="famsec: %(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        where = f" (field: {exc.field})" if exc.field else ""
        print(f"famsec: config error{where}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InvalidInputError, OSError, json.JSONDecodeError) as exc:
        print(f"famsec: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"famsec: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
