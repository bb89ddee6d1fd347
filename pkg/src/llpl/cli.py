"""Command-line entry point.

Exit codes: 0 success, 2 config error, 3 run failure (off-path abort or
non-finite state), 4 missing artifact. Verbosity is controlled by the
LLPL_LOG environment variable (error, info, or debug).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import harness, sim
from .imitation import EmptyDataset
from .lifelong import EmptyMemory

_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging():
    name = os.environ.get("LLPL_LOG", "info").lower()
    logging.basicConfig(level=_LEVELS.get(name, logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="llpl",
                                description="Lifelong policy learning experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("demo-gen", "generate the synthetic demonstration"),
                        ("train-il", "train the initial policy by imitation"),
                        ("run", "execute the configured method over the scenario"),
                        ("compare", "join run summaries into a comparison table"),
                        ("noise-replay", "lifelong learning on noise-corrupted logs")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", action="append", required=True,
                        help="config file (repeat for compare)")
        sp.add_argument("--seed", type=int, default=None, help="override [experiment] seed")
        sp.add_argument("--out", default=None, help="override output directory")
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "compare":
            cfgs = list(args.config)
            out = args.out or os.path.join(os.path.dirname(cfgs[0]) or ".", "compare.csv")
            harness.cmd_compare(cfgs, out)
            print(out)
            return 0
        if len(args.config) != 1:
            print("exactly one --config expected", file=sys.stderr)
            return 2
        cfg = harness.load_config(args.config[0])
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.output_dir = args.out
        if args.command == "demo-gen":
            paths = harness.cmd_demo_gen(cfg)
        elif args.command == "train-il":
            paths = harness.cmd_train_il(cfg)
        elif args.command == "run":
            paths = harness.cmd_run(cfg)
            if paths.get("aborted"):
                print("run failure: an epoch aborted (see logs)", file=sys.stderr)
                return 3
        else:
            paths = harness.cmd_noise_replay(cfg)
            if paths.get("aborted"):
                print("run failure: an epoch aborted (see logs)", file=sys.stderr)
                return 3
        for key, value in sorted(paths.items()):
            if isinstance(value, str):
                print(f"{key}: {value}")
        return 0
    except harness.ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (harness.MissingArtifact, harness.MissingRun) as e:
        print(f"missing artifact: {e}", file=sys.stderr)
        return 4
    except (sim.NonFiniteState, sim.PathExhausted, EmptyDataset, EmptyMemory) as e:
        print(f"run failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
