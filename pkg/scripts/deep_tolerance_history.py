#!/usr/bin/env python3
"""Convergence histories on a mesh with holes, solved to a deep tolerance.

Runs CG, the exact two-level Schwarz solver, and (given a trained model) the
learned preconditioner to a relative residual of 1e-9, writing one CSV column
of history per method for plotting.
"""

import argparse
import sys

import numpy as np

import ddmgnn as dg
from ddmgnn.dataset import sample_coeffs
from ddmgnn.hybrid import build_ddm_gnn


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--model", help="trained model file; adds the learned method")
    parser.add_argument("--out", default="deep_tolerance_history.csv")
    parser.add_argument("--seed", type=int, default=99)
    parser.add_argument("--subdomain-size", type=int, default=110)
    args = parser.parse_args()

    # cell size 0.07 keeps the element size in the training distribution
    mesh = dg.generate_rect_mesh(30, 20, 2.1, 1.4,
                                 [(5, 6, 8, 14), (13, 8, 17, 12), (23, 6, 26, 14)])
    coeffs = sample_coeffs(np.random.default_rng((args.seed, 1)))
    system = dg.assemble(mesh, coeffs)
    owner = dg.partition(system.a, args.subdomain_size, args.seed)
    dec = dg.add_overlap(owner, system.a, 2)
    coords = mesh.coords[system.node_of_interior]

    histories = {}
    _, rep = dg.cg(system.a, system.b, 1e-9, 20000)
    histories["cg"] = rep.residual_history
    _, rep = dg.pcg(system.a, system.b, dg.build_asm(system.a, dec, "two"), 1e-9, 400)
    histories["ddm-lu-2"] = rep.residual_history
    if args.model:
        model = dg.load_model(args.model)
        precond = build_ddm_gnn(system.a, coords, dec, model)
        _, rep = dg.pcg(system.a, system.b, precond, 1e-9, 400)
        histories["ddm-gnn"] = rep.residual_history

    depth = max(len(h) for h in histories.values())
    names = list(histories)
    with open(args.out, "w") as fh:
        fh.write("iteration," + ",".join(names) + "\n")
        for i in range(depth):
            cells = [repr(histories[n][i]) if i < len(histories[n]) else "" for n in names]
            fh.write(f"{i}," + ",".join(cells) + "\n")
    for name, hist in histories.items():
        print(f"{name}: {len(hist) - 1} iterations, final relres {hist[-1]:.3e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
