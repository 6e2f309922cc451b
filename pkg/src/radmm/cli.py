"""Command-line driver for the experiment batch runs.

Subcommands: ``run`` (error trajectories), ``rate`` (spectral analysis only),
``scan`` (stability boundaries), ``compare`` (empirical vs theoretical
rates), ``quartic`` (curvature sweep). Each takes a JSON config plus
overrides and writes CSV/JSON into the output directory. Exit code 0 on
success, 2 when any trial or solver step errored.
"""

import argparse
import sys

from radmm import experiments

_COMMANDS = {
    "run": experiments.run_trajectories,
    "rate": experiments.spectral_report,
    "scan": experiments.stability_scan,
    "compare": experiments.compare_rates,
    "quartic": experiments.run_quartic,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="radmm",
        description="Asynchronous lossy-network consensus ADMM experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        sp = sub.add_parser(name, help=fn.__doc__.splitlines()[0].lower())
        sp.add_argument("--config", required=True, help="experiment config JSON")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override master seed")
        sp.add_argument("--trials", type=int, default=None, help="override trial count")
        sp.add_argument("--iters", type=int, default=None, help="override iteration count")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    cfg = experiments.ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.loss_seed = args.seed
    if args.trials is not None:
        cfg.trials = args.trials
    if args.iters is not None:
        cfg.iterations = args.iters
    try:
        summary = _COMMANDS[args.command](cfg, args.out)
    except Exception as exc:  # trial/solver failures map to exit code 2
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.out}/summary.json")
    if summary.get("rel_diff_max") is not None:
        print(f"max relative rate difference: {summary['rel_diff_max']:.3e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
