"""Command line interface: ``factorlens {fit|synth|synth-study|edr|real-protocol|verify}``.

Each command builds a luigi task and runs it with a local scheduler. Settings come from flags
and an optional ``--config`` file: json or yaml files hold the same keys as the flags, and flags
win over them; a luigi ``.cfg`` file sets the solver, grid, holdout and parallel sections.
"""
import argparse
import json
import logging
import sys
from pathlib import Path

import luigi

from .exceptions import (
    ConvergenceError,
    FactorLensError,
    InputError,
    ParameterError,
    SelectionError,
)
from .io import load_config, load_json
from .oracles import DEFAULT_SOLVER, EXTRA_SECTIONS, SECTIONS
from .selection import ESTIMATORS
from .studies import UNIFORM_EDR_ALPHA
from .tasks.config import default_workers
from .tasks.fit import FitEstimator
from .tasks.real import PreprocessPrices, RealDataProtocol
from .tasks.synthetic import EdrStudy, SynthStudy, SyntheticSample
from .tasks.verify import VerifySuite

L = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INPUT = 2
EXIT_CONVERGENCE = 3

_FAILURES = []


@luigi.Task.event_handler(luigi.Event.FAILURE)
def _record_failure(task, exception):
    """Keep the exception of a failed task to map it to an exit code."""
    L.debug("Task %s failed", task)
    _FAILURES.append(exception)


def exit_code(exception):
    """Exit code of an exception raised by a command."""
    if isinstance(exception, InputError):
        return EXIT_INPUT
    if isinstance(exception, (ConvergenceError, SelectionError)):
        return EXIT_CONVERGENCE
    return EXIT_FAILED


def _add_common(parser, out):
    parser.add_argument("--config", help="json, yaml or luigi .cfg file with settings")
    parser.add_argument("--out", default=out, help="output folder")
    parser.add_argument(
        "--workers", type=int, default=None, help="number of processes (FACTORLENS_WORKERS)"
    )
    parser.add_argument("--log-level", default="WARNING", help="luigi log level")
    parser.add_argument("--rerun", action="store_true", help="remove existing outputs first")


def _add_synth(parser):
    parser.add_argument("--m", type=int, default=200)
    parser.add_argument("--k-star", type=int, default=10)
    parser.add_argument("--sigma-f", type=float, default=5.0)
    parser.add_argument("--sigma-r", type=float, default=0.0)
    parser.add_argument("--ns", type=int, nargs="+", default=[50, 100, 200, 400])
    parser.add_argument("--replications", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--k-grid", type=int, nargs="+", default=None)
    parser.add_argument("--lambda-grid", type=float, nargs="+", default=None)
    parser.add_argument("--train-fraction", type=float, default=None, help="holdout, 0.7")


def build_parser():
    """Argument parser with one subcommand per workflow."""
    parser = argparse.ArgumentParser(prog="factorlens", description=__doc__.splitlines()[0])
    commands = parser.add_subparsers(dest="command", required=True)

    fit = commands.add_parser("fit", help="fit one estimator with a fixed parameter")
    _add_common(fit, "out/estimate")
    fit.add_argument("input", help="csv file of samples, or of a covariance with --covariance")
    fit.add_argument("--est", choices=ESTIMATORS, default="utm")
    fit.add_argument("--k", type=int, default=None)
    fit.add_argument("--lambda", dest="lam", type=float, default=None)
    fit.add_argument("--header", action="store_true", help="skip the first line of the csv")
    fit.add_argument("--covariance", action="store_true", help="input is a covariance matrix")
    fit.add_argument("--n", type=int, default=None, help="sample count of a covariance input")
    fit.add_argument(
        "--n-implied", action="store_true", help="take the sample count from the input rows"
    )
    fit.add_argument("--strict", action="store_true", help="fail on solver non-convergence")

    sample = commands.add_parser("synth", help="one synthetic draw with its ground truth")
    _add_common(sample, "out/sample")
    sample.add_argument("--m", type=int, default=200)
    sample.add_argument("--k-star", type=int, default=10)
    sample.add_argument("--sigma-f", type=float, default=5.0)
    sample.add_argument("--sigma-r", type=float, default=0.0)
    sample.add_argument("--n", type=int, default=100)
    sample.add_argument("--seed", type=int, default=0)

    synth = commands.add_parser("synth-study", help="replication study on synthetic data")
    _add_common(synth, "out/synth")
    _add_synth(synth)
    synth.add_argument("--estimators", nargs="+", choices=ESTIMATORS, default=["urm", "utm"])

    edr = commands.add_parser("edr", help="equivalent data requirement on synthetic data")
    _add_common(edr, "out/edr")
    _add_synth(edr)
    edr.add_argument("--baseline", choices=ESTIMATORS, default="urm")
    edr.add_argument("--challenger", choices=ESTIMATORS, default="utm")
    edr.add_argument("--alpha", type=float, default=UNIFORM_EDR_ALPHA, help="0.10 nonuniform")
    edr.add_argument("--reuse-theta", action="store_true")

    real = commands.add_parser("real-protocol", help="sliding-window protocol on prices")
    _add_common(real, "out/real")
    real.add_argument("prices", help="csv file of adjusted close prices, dates x tickers")
    real.add_argument("--estimators", nargs="+", choices=ESTIMATORS, default=list(ESTIMATORS))
    real.add_argument("--windows", type=int, nargs="+", default=list(range(200, 1201, 100)))
    real.add_argument("--validation-start", type=int, default=1200)
    real.add_argument("--evaluation-start", type=int, default=1300)
    real.add_argument("--n-anchors", type=int, default=10)
    real.add_argument("--anchor-step", type=int, default=10)
    real.add_argument("--test-len", type=int, default=10)
    real.add_argument("--vol-window", type=int, default=50)
    real.add_argument("--coverage", type=float, default=0.995)
    real.add_argument("--drop-degenerate", action="store_true")
    real.add_argument("--k-grid", type=int, nargs="+", default=None)
    real.add_argument("--lambda-grid", type=float, nargs="+", default=None)

    verify = commands.add_parser("verify", help="numerical verification suite")
    _add_common(verify, "out/verify")
    verify.add_argument("--only", nargs="+", choices=SECTIONS + EXTRA_SECTIONS, default=None)
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--solver", default=DEFAULT_SOLVER)
    return parser


def _subparser(parser, command):
    actions = [a for a in parser._actions if isinstance(a, argparse._SubParsersAction)]
    return actions[0].choices[command]


def parse_args(argv=None):
    """Parse flags, with defaults taken from the --config file when given.

    Raises:
        ParameterError: if the config file has keys that are not flags of the command
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is None or Path(args.config).suffix == ".cfg":
        return args

    subparser = _subparser(parser, args.command)
    config = {key.replace("-", "_"): value for key, value in load_config(args.config).items()}
    if "lambda" in config:
        config["lam"] = config.pop("lambda")
    known = {action.dest for action in subparser._actions} - {"help", "config"}
    unknown = sorted(set(config) - known)
    if unknown:
        raise ParameterError(f"Unknown keys {unknown} in config {args.config}")
    subparser.set_defaults(**config)
    return parser.parse_args(argv)


def _set_luigi_config(args):
    """Write the shared settings in the luigi config read by the config classes."""
    luigi_config = luigi.configuration.get_config()
    if args.config is not None and Path(args.config).suffix == ".cfg":
        if not Path(args.config).exists():
            raise InputError(f"Config file {args.config} not found")
        luigi_config.read(args.config)
    if args.workers is not None or not luigi_config.has_option("ParallelConfig", "n_workers"):
        workers = args.workers if args.workers is not None else default_workers()
        if workers < 1:
            raise ParameterError(f"Need at least one worker, got {workers}")
        luigi_config.set("ParallelConfig", "n_workers", str(workers))
    if getattr(args, "train_fraction", None) is not None:
        luigi_config.set("HoldoutConfig", "train_fraction", str(args.train_fraction))
    if getattr(args, "k_grid", None):
        luigi_config.set("GridConfig", "k_grid", json.dumps(list(args.k_grid)))
    if getattr(args, "lambda_grid", None):
        luigi_config.set("GridConfig", "lambda_grid", json.dumps(list(args.lambda_grid)))


def _synth_params(args):
    return {
        "m": args.m,
        "k_star": args.k_star,
        "sigma_f": args.sigma_f,
        "sigma_r": args.sigma_r,
        "ns": list(args.ns),
        "n_replications": args.replications,
        "seed": args.seed,
        "rerun": args.rerun,
    }


def make_task(args):
    """luigi task of a parsed command."""
    out = Path(args.out)
    if args.command == "fit":
        if args.n_implied and (args.covariance or args.n is not None):
            raise ParameterError("--n-implied reads the sample count from a samples file")
        return FitEstimator(
            input_path=args.input,
            estimator=args.est,
            k=args.k,
            lam=args.lam,
            header=args.header,
            covariance=args.covariance,
            n=args.n,
            strict=args.strict,
            estimate_path=str(out),
            rerun=args.rerun,
        )
    if args.command == "synth":
        return SyntheticSample(
            m=args.m,
            k_star=args.k_star,
            sigma_f=args.sigma_f,
            sigma_r=args.sigma_r,
            n=args.n,
            seed=args.seed,
            sample_folder=str(out),
            rerun=args.rerun,
        )
    if args.command == "synth-study":
        return SynthStudy(
            estimators=list(args.estimators),
            scores_path=str(out / "scores.csv"),
            summary_path=str(out / "summary.csv"),
            **_synth_params(args),
        )
    if args.command == "edr":
        return EdrStudy(
            baseline=args.baseline,
            challenger=args.challenger,
            alpha=args.alpha,
            reuse_theta=args.reuse_theta,
            edr_path=str(out / "edr.csv"),
            summary_path=str(out / "summary.csv"),
            **_synth_params(args),
        )
    if args.command == "real-protocol":
        luigi_config = luigi.configuration.get_config()
        preprocess = {
            "prices_path": args.prices,
            "window": args.vol_window,
            "coverage": args.coverage,
            "drop_degenerate": args.drop_degenerate,
            "returns_folder": str(out / "returns"),
        }
        for key, value in preprocess.items():
            luigi_config.set(PreprocessPrices.__name__, key, str(value))
        return RealDataProtocol(
            estimators=list(args.estimators),
            windows=list(args.windows),
            validation_start=args.validation_start,
            evaluation_start=args.evaluation_start,
            n_anchors=args.n_anchors,
            anchor_step=args.anchor_step,
            test_len=args.test_len,
            scores_path=str(out / "scores.csv"),
            summary_path=str(out / "summary.csv"),
            rerun=args.rerun,
        )
    return VerifySuite(
        only=list(args.only or []),
        seed=args.seed,
        solver=args.solver,
        report_path=str(out / "report.json"),
        rerun=args.rerun,
    )


def _report(args, task):
    """Print the command result and return its exit code."""
    if args.command == "fit":
        record = load_json(Path(task.output().path) / "estimate.json")
        print(f"avg_loglik {record['avg_loglik']:.10g}")
    elif args.command == "verify":
        report = load_json(task.output().path)
        for name, section in report["sections"].items():
            print(f"{name}: {section['status']}")
        print(f"overall: {report['status']}")
        if report["status"] == "fail":
            return EXIT_FAILED
        if report["status"] == "inconclusive":
            return EXIT_CONVERGENCE
    else:
        for target in luigi.task.flatten(task.output()):
            print(target.path)
    return EXIT_OK


def main(argv=None):
    """Run a command and return its exit code."""
    try:
        args = parse_args(argv)
        _set_luigi_config(args)
        task = make_task(args)
    except FactorLensError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)

    del _FAILURES[:]
    success = luigi.build([task], local_scheduler=True, log_level=args.log_level)
    if not success:
        if _FAILURES:
            print(f"error: {_FAILURES[-1]}", file=sys.stderr)
            return exit_code(_FAILURES[-1])
        print("error: workflow did not complete", file=sys.stderr)
        return EXIT_FAILED
    return _report(args, task)


if __name__ == "__main__":
    sys.exit(main())
