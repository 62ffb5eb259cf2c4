"""Command-line entry point.

Subcommands: gen, train, eval, sweep, timing. Every subcommand takes
--config PATH (required), --seed INT (overrides the config's seeds), and
--out DIR (overrides output_dir). Exit codes: 0 success, 1 config error,
2 runtime or numeric error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import sys

from .experiments import (
    ConfigError,
    cmd_eval,
    cmd_gen,
    cmd_sweep,
    cmd_timing,
    cmd_train,
    load_config,
)

_HELP = {
    "gen": "generate corpus files from the corpus section",
    "train": "train a decoder bank and write checkpoint + log",
    "eval": "score a trained checkpoint and write report files",
    "sweep": "run the configured axis and write a comparison table",
    "timing": "summarize train-log wall-times into percentage shares",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mixdec",
        description="mixture-of-decoders experiment runner",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, blurb in _HELP.items():
        p = sub.add_parser(name, help=blurb)
        p.add_argument("--config", required=True, help="path to JSON config")
        p.add_argument("--seed", type=int, default=None,
                       help="override corpus and train seeds")
        p.add_argument("--out", default=None, help="override output_dir")
    return parser


def _run(command: str, config) -> None:
    if command == "gen":
        for path in cmd_gen(config):
            print(path)
    elif command == "train":
        paths = cmd_train(config)
        print(paths["checkpoint"])
        print(paths["log"])
    elif command == "eval":
        report, coverage = cmd_eval(config)
        for name in ("bleu1_f", "bleu2_f", "dist1", "dist2", "pairwise_bleu"):
            value = getattr(report, name)
            if value is not None:
                print(f"{name} {100.0 * value:.4f}")
        print(f"mode_coverage {100.0 * coverage:.4f}")
    elif command == "sweep":
        print(cmd_sweep(config))
    elif command == "timing":
        shares = cmd_timing(config)
        if shares is None:
            print("timings absent (all zero)")
        else:
            for name, value in shares.items():
                print(f"{name} {value:.4f}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits itself; fold usage errors into the config-error code
        return 0 if exc.code in (0, None) else 1
    try:
        config = load_config(args.config, seed=args.seed, out=args.out)
        _run(args.command, config)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
