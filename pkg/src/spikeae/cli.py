"""``spikeae train|eval|analyze``.

Exit codes: 0 success, 1 other library error, 2 config, 3 data,
4 numeric (diverged run), 5 format/consistency (corrupt files).
"""

from __future__ import annotations

import argparse
import sys

from .config import load_config
from .errors import SpikeAEError


def build_parser():
    p = argparse.ArgumentParser(prog="spikeae", description="Spiking autoencoder experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("train", "train one model per seed and write metrics.csv and checkpoints"),
        ("eval", "loss, activity statistics and reconstructions for a checkpoint"),
        ("analyze", "latent distance, clustering and correlation analysis for a checkpoint"),
    ):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", help="key=value config file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, help="seed (overrides the config)")
        if name != "train":
            sp.add_argument("--checkpoint", required=True, help="checkpoint file")
            sp.add_argument("--split", default="validation", choices=("train", "validation"))
    return p


def _log(message):
    print(message, flush=True)


def run(args, log=_log):
    from . import experiment

    cfg = load_config(args.config, args.set, args.seed)
    if args.command == "train":
        return experiment.cmd_train(cfg, args.out, log)
    if args.command == "eval":
        return experiment.cmd_eval(cfg, args.checkpoint, args.out, args.split, log)
    return experiment.cmd_analyze(cfg, args.checkpoint, args.out, args.split, log)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        run(args)
    except SpikeAEError as exc:
        print(f"spikeae: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        return 130
    return 0


if __name__ == "__main__":
    sys.exit(main())
