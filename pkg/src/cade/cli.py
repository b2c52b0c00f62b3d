"""``cade`` command line: thin argparse front end over :mod:`cade.pipeline`."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import pipeline
from .config import ALGORITHMS, PROBLEMS, STRATEGIES, WAVES, ExperimentConfig, reference_text
from .errors import (
    CadeError,
    ConfigError,
    CorruptFileError,
    MissingInputError,
    NumericError,
    SpecMismatchError,
)

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERIC = 0, 2, 3, 4

def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="INI experiment config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="run directory")
    p.add_argument("--workers", type=int, help="fitness evaluation threads")
    p.add_argument("--problem", choices=PROBLEMS)
    p.add_argument("--algorithm", choices=ALGORITHMS)
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--wave-f", choices=WAVES)
    p.add_argument("--wave-cr", choices=WAVES)
    p.add_argument("--f-init", type=float)
    p.add_argument("--cr-init", type=float)
    p.add_argument("--update-period", type=int)
    p.add_argument("--generations", type=int)
    return p


def build_parser():
    common = _common()
    parser = argparse.ArgumentParser(prog="cade", description="Cosine-annealed DE for spiking networks")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("pretrain", parents=[common], help="surrogate-gradient pretraining on the source data")
    sub.add_parser("init", parents=[common], help="write the initial population")
    sub.add_parser("evolve", parents=[common], help="evolve the initial population")
    sub.add_parser("eval", parents=[common], help="accuracy of initial and evolved best genomes")
    c = sub.add_parser("corrupt", parents=[common], help="corruption errors and mCE")
    c.add_argument("--model", help="model checkpoint (default: best evolved genome)")
    c.add_argument("--base", help="base checkpoint (default: best initial genome)")
    sub.add_parser("sweep", parents=[common], help="CADE over the configured hyperparameter grid")
    s = sub.add_parser("stats", help="weight statistics of a checkpoint")
    s.add_argument("checkpoint")
    s.add_argument("--bin-width", type=float, default=0.01)
    s.add_argument("--name", default="SNN")
    sub.add_parser("run", parents=[common], help="pretrain, init, evolve, eval and corrupt in one go")
    sub.add_parser("config-reference", help="print the default config with field notes")
    return parser


OVERRIDES = {
    "seed": "run__seed",
    "out": "run__out",
    "workers": "run__workers",
    "problem": "evolve__problem",
    "algorithm": "evolve__algorithm",
    "strategy": "evolve__strategy",
    "wave_f": "evolve__wave_f",
    "wave_cr": "evolve__wave_cr",
    "f_init": "evolve__f_init",
    "cr_init": "evolve__cr_init",
    "update_period": "evolve__update_period",
    "generations": "evolve__generations",
}


def load_config(args) -> ExperimentConfig:
    if args.config is not None:
        if not args.config.exists():
            raise MissingInputError(f"config file not found: {args.config}")
        cfg = ExperimentConfig.from_ini(args.config.read_text())
    else:
        cfg = ExperimentConfig().validate()
    updates = {key: getattr(args, attr) for attr, key in OVERRIDES.items() if getattr(args, attr) is not None}
    return cfg.with_overrides(**updates) if updates else cfg


def dispatch(args, out=None):
    out = out or sys.stdout
    if args.command == "config-reference":
        out.write(reference_text())
        return
    if args.command == "stats":
        out.write(pipeline.cmd_stats(args.checkpoint, args.bin_width, args.name) + "\n")
        return
    cfg = load_config(args)
    if args.command == "pretrain":
        print(pipeline.cmd_pretrain(cfg), file=out)
    elif args.command == "init":
        print(pipeline.cmd_init(cfg), file=out)
    elif args.command == "evolve":
        res = pipeline.cmd_evolve(cfg)
        print(f"best fitness {res.initial_best!r} -> {res.final_best!r}", file=out)
    elif args.command == "eval":
        for (model, split), acc in pipeline.cmd_eval(cfg).items():
            print(f"{model}\t{split}\t{100 * acc:.2f}", file=out)
    elif args.command == "corrupt":
        report = pipeline.cmd_corrupt(cfg, args.model, args.base)
        out.write(report.to_tsv())
    elif args.command == "sweep":
        pipeline.cmd_sweep(cfg)
        out.write(pipeline.RunPaths(Path(cfg.run.out)).sweep.read_text())
    elif args.command == "run":
        res, _, _ = pipeline.cmd_run(cfg)
        print(f"best fitness {res.initial_best!r} -> {res.final_best!r}", file=out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        dispatch(args)
    except ConfigError as exc:
        where = f" [{exc.field}]" if getattr(exc, "field", None) else ""
        print(f"config error{where}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingInputError, CorruptFileError, SpecMismatchError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CadeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
