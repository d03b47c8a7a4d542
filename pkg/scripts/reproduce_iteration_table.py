#!/usr/bin/env python3
"""Desk-scale iteration-count study: sweep problem size, subdomain size, and
overlap for CG and the two Schwarz-preconditioned solvers, writing one CSV.

Mirrors the structure of the published iteration table at sizes that run in
minutes on a laptop.  Pass --model to include the learned preconditioner.
"""

import argparse
import sys

from ddmgnn.cli import main as cli_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="iteration_table.csv")
    parser.add_argument("--manifest", default="iteration_table_manifest.json")
    parser.add_argument("--model", help="trained model file; adds ddm-gnn to the sweep")
    parser.add_argument("--problems", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    methods = "cg,ddm-lu-1,ddm-lu-2" + (",ddm-gnn" if args.model else "")
    argv = [
        "bench",
        "--sizes", "1200,2600",
        "--subdomain-sizes", "150,300",
        "--overlaps", "2,4",
        "--methods", methods,
        "--problems", str(args.problems),
        "--tol", "1e-6",
        "--seed", str(args.seed),
        "--out", args.out,
        "--manifest", args.manifest,
    ]
    if args.model:
        argv += ["--model", args.model]
    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
