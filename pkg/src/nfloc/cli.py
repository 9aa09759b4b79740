"""Command-line entry point.

Subcommands: locate, sweep, crlb-sweep, gen-dataset, train, eval. Exit codes:
0 success, 2 configuration problem, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from .config import ConfigError, parse_config
from .crlb import SingularFim
from .disambiguation import ConvergenceFailure
from .regnet import TrainingDiverged
from . import runner

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="nfloc",
        description="Near-field emitter localization benchmarks on a grouped "
                    "partially-connected hybrid array.")
    sub = ap.add_subparsers(dest="command", required=True)
    specs = {
        "locate": "run one trial per method and print the estimates",
        "sweep": "Monte Carlo RMSE/success sweep over SNR and snapshot counts",
        "crlb-sweep": "CRLB-vs-SNR table across a group-count family",
        "gen-dataset": "synthesize a training corpus for the regression network",
        "train": "train the regression network and persist the model",
        "eval": "sweep using a persisted regression-network model",
    }
    for name, help_text in specs.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="TOML experiment config")
        p.add_argument("--out", help="output path (overrides config 'output')")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--trials", type=int, help="override sweep trial count")
        p.add_argument("--workers", type=int, default=1,
                       help="parallel worker processes (default 1)")
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = parse_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be >= 0")
            config = dataclasses.replace(config, seed=args.seed)
        if args.trials is not None:
            if args.trials < 1:
                raise ConfigError("--trials must be >= 1")
            config = dataclasses.replace(config, trials=args.trials)

        out = args.out if args.out is not None else config.output
        if args.command != "locate" and out is None:
            raise ConfigError(f"{args.command} needs an output path "
                              "(--out or 'output' in the config)")

        if args.command == "locate":
            sys.stdout.write(runner.run_locate(config))
        elif args.command == "sweep":
            rows = runner.run_sweep(config, out, workers=max(1, args.workers))
            print(f"wrote {len(rows)} rows to {out}")
        elif args.command == "crlb-sweep":
            rows = runner.run_crlb_sweep(config, out)
            print(f"wrote {len(rows)} rows to {out}")
        elif args.command == "gen-dataset":
            n = runner.run_gen_dataset(config, out)
            print(f"wrote {n} samples to {out}")
        elif args.command == "train":
            model_path, loss_path = runner.run_train(config, out)
            print(f"wrote model to {model_path}, losses to {loss_path}")
        elif args.command == "eval":
            rows = runner.run_eval(config, out, workers=max(1, args.workers))
            print(f"wrote {len(rows)} rows to {out}")
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, OSError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SingularFim, TrainingDiverged, ConvergenceFailure,
            np.linalg.LinAlgError) as e:
        print(f"numerical failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
