"""Full benchmark run: ingest, train both RL variants, compare all strategies, render the table.

    python scripts/run_experiment.py --config my.yaml --out runs/exp1 --seed 3
"""

import argparse
import sys

from twosided.cli import main as cli


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", help="experiment config (default: bundled synth3)")
    ap.add_argument("--out", default="runs/experiment")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--episodes", type=int, help="override train.episodes")
    ap.add_argument("--max-updates", type=int, help="override train.max_updates")
    args = ap.parse_args()

    common = ["--out", args.out]
    if args.config:
        common += ["--config", args.config]
    if args.seed is not None:
        common += ["--seed", str(args.seed)]
    budget = []
    if args.episodes is not None:
        budget += ["--episodes", str(args.episodes)]
    if args.max_updates is not None:
        budget += ["--max-updates", str(args.max_updates)]

    frames = ["--frames", args.out]
    steps = [
        ["ingest", *common],
        ["train", *common, *frames, "--strategy", "rl:pnl", *budget],
        ["train", *common, *frames, "--strategy", "rl:return", *budget],
        ["compare", *common, *frames],
        ["report", *common],
    ]
    for argv in steps:
        print("$ twosided " + " ".join(argv), flush=True)
        code = cli(argv)
        if code:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
