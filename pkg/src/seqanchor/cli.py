"""Command-line entry point.

Exit codes: 0 success, 2 config error, 3 numeric failure, 4 I/O error. On
failure a single ``error code=<name> exit=<n>: <message>`` line goes to
stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import experiment as ex
from .config import load_config
from .ensembling import load_ensemble
from .errors import ConfigError, DataFormatError, DimensionError, NumericalError
from .metrics import format_report, read_predictive, write_predictive

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _load(args, method=None):
    if not args.config:
        raise ConfigError("--config is required for this command")
    cfg = load_config(args.config)
    return cfg.with_overrides(seed=args.seed, method=method, output_dir=args.out)


def cmd_train(args, method):
    cfg = _load(args, method)
    result = ex.run_experiment(cfg)
    sys.stdout.write(format_report(result.report))
    return EXIT_OK


def cmd_oracle(args):
    cfg = _load(args)
    data = ex.build_dataset(cfg)
    prior = ex.build_prior(cfg)
    inputs = ex.evaluation_inputs(cfg, data)
    reference = ex.compute_reference(cfg, data, prior, inputs)
    if reference is None:
        raise ConfigError("no exact reference posterior for this architecture (set oracle.kind or shrink the model)")
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = os.path.join(cfg.output_dir, "reference.csv")
    write_predictive(path, reference)
    print(path)
    return EXIT_OK


def cmd_evaluate(args):
    cfg = _load(args)
    if not args.ensemble:
        raise ConfigError("evaluate needs --ensemble PATH")
    ensemble = load_ensemble(args.ensemble)
    if ensemble.arch != cfg.arch:
        raise ConfigError("ensemble architecture differs from the configured one")
    data = ex.build_dataset(cfg)
    inputs = ex.evaluation_inputs(cfg, data)
    if args.reference:
        reference = read_predictive(args.reference)
    else:
        reference = ex.compute_reference(cfg, data, ensemble.prior, inputs)
    report = ex.evaluate(cfg, ensemble, reference, inputs)
    text = format_report(report)
    os.makedirs(cfg.output_dir, exist_ok=True)
    with open(os.path.join(cfg.output_dir, "report.txt"), "w", newline="\n") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_compare(args):
    rows = ex.compare_runs(args.reports)
    sys.stdout.write(ex.format_comparison(rows))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "comparison.txt"), "w", newline="\n") as fh:
            fh.write(ex.format_comparison(rows))
        with open(os.path.join(args.out, "comparison.csv"), "w", newline="\n") as fh:
            fh.write(ex.comparison_csv(rows))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqanchor", description="Anchored and sequential anchored ensembles")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        p.add_argument("--config", required=needs_config, help="experiment config (JSON)")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--out", default=None, help="output directory")
        return p

    common(sub.add_parser("train-ae", help="train an anchored ensemble and score it"))
    common(sub.add_parser("train-sae", help="train a sequential anchored ensemble and score it"))
    common(sub.add_parser("oracle", help="write the exact reference predictive"))
    p = common(sub.add_parser("evaluate", help="score a saved ensemble"))
    p.add_argument("--ensemble", required=True)
    p.add_argument("--reference", default=None, help="reference predictive CSV (computed if omitted)")
    p = common(sub.add_parser("compare", help="median/min/max table over metric reports"), needs_config=False)
    p.add_argument("reports", nargs="+")
    return parser


def _fail(code_name, exit_code, message):
    sys.stderr.write(f"error code={code_name} exit={exit_code}: {message}\n")
    return exit_code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handlers = {
        "train-ae": lambda: cmd_train(args, "ae"),
        "train-sae": lambda: cmd_train(args, "sae"),
        "oracle": lambda: cmd_oracle(args),
        "evaluate": lambda: cmd_evaluate(args),
        "compare": lambda: cmd_compare(args),
    }
    try:
        return handlers[args.command]()
    except NumericalError as exc:
        return _fail(exc.code, EXIT_NUMERIC, exc)
    except DataFormatError as exc:
        return _fail(exc.code, EXIT_IO, exc)
    except (ConfigError, DimensionError) as exc:
        return _fail(exc.code, EXIT_CONFIG, exc)
    except (OSError, json.JSONDecodeError) as exc:
        return _fail("io_error", EXIT_IO, exc)


if __name__ == "__main__":
    sys.exit(main())
