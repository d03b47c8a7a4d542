#!/usr/bin/env python3
"""End-to-end training pipeline at desk scale: generate a corpus by harvesting
local problems from exact-solve preconditioned runs, then train the
message-passing solver on it and store the model plus the loss log."""

import argparse
import sys

from ddmgnn.cli import main as cli_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", default="desk_run")
    parser.add_argument("--n-problems", type=int, default=20)
    parser.add_argument("--target-nodes", type=int, default=600)
    parser.add_argument("--subdomain-size", type=int, default=110)
    parser.add_argument("--epochs", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    code = cli_main([
        "dataset",
        "--n-problems", str(args.n_problems),
        "--target-nodes", str(args.target_nodes),
        "--subdomain-size", str(args.subdomain_size),
        "--seed", str(args.seed),
        "--out", args.workdir,
    ])
    if code != 0:
        return code
    return cli_main([
        "train",
        "--dataset", args.workdir,
        "--k-bar", "10",
        "--d", "10",
        "--epochs", str(args.epochs),
        "--seed", str(args.seed),
        "--out", f"{args.workdir}/model.dss",
        "--log", f"{args.workdir}/training_log.csv",
    ])


if __name__ == "__main__":
    sys.exit(main())
