"""Command-line entry points: mesh-gen, assemble-check, partition, dataset,
train, solve, and bench.

Exit codes: 0 success (including observational non-convergence), 1 usage
error, 2 internal error.  ``--config`` accepts a JSON file whose keys mirror
the long flag names (underscored); explicit flags win over config values.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time

import numpy as np

from . import dataset as ds
from .asm import build_asm
from .decomp import add_overlap, partition
from .dss import TrainConfig, SchedulerConfig, init_model, load_model, save_model, train, training_log_csv
from .hybrid import build_ddm_gnn
from .mesh import export_mesh, generate_blob_mesh, generate_rect_mesh, import_mesh
from .fem import assemble
from .sparse import cg, ic0, pcg

METHODS = ("cg", "ic0", "ddm-lu-1", "ddm-lu-2", "ddm-gnn")


def _parse_holes(text: str):
    """Parse 'i0,j0,i1,j1;i0,j0,i1,j1;...' into hole tuples."""
    holes = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        nums = [int(v) for v in part.split(",")]
        if len(nums) != 4:
            raise ValueError(f"hole must have 4 integers, got {part!r}")
        holes.append(tuple(nums))
    return holes


def _load_mesh_args(args):
    if args.mesh:
        return import_mesh(args.mesh)
    return generate_blob_mesh(args.seed, args.target_nodes, args.perturbation)


def _build_setup(args):
    """Problem setup shared by solve/bench: mesh, system, decomposition."""
    mesh = _load_mesh_args(args)
    coeffs = ds.sample_coeffs(np.random.default_rng((args.seed, 1)))
    system = assemble(mesh, coeffs)
    owner = partition(system.a, args.subdomain_size, args.seed)
    dec = add_overlap(owner, system.a, args.overlap)
    coords = mesh.coords[system.node_of_interior]
    return mesh, system, dec, coords


def _run_method(method, system, dec, coords, model, tol, max_iter):
    if method == "cg":
        return cg(system.a, system.b, tol, max_iter)
    if method == "ic0":
        return pcg(system.a, system.b, ic0(system.a), tol, max_iter)
    if method == "ddm-lu-1":
        return pcg(system.a, system.b, build_asm(system.a, dec, "one"), tol, max_iter)
    if method == "ddm-lu-2":
        return pcg(system.a, system.b, build_asm(system.a, dec, "two"), tol, max_iter)
    if method == "ddm-gnn":
        if model is None:
            raise ValueError("--model is required for method ddm-gnn")
        precond = build_ddm_gnn(system.a, coords, dec, model)
        return pcg(system.a, system.b, precond, tol, max_iter)
    raise ValueError(f"unknown method {method!r}")


def cmd_mesh_gen(args):
    if args.kind == "blob":
        mesh = generate_blob_mesh(args.seed, args.target_nodes, args.perturbation)
    else:
        holes = _parse_holes(args.holes) if args.holes else []
        mesh = generate_rect_mesh(args.nx, args.ny, args.lx, args.ly, holes)
    export_mesh(mesh, args.out)
    print(json.dumps({"nodes": mesh.n_nodes, "triangles": mesh.n_triangles,
                      "boundary_nodes": int(mesh.boundary.sum()), "out": args.out}))


def cmd_assemble_check(args):
    mesh = _load_mesh_args(args)
    coeffs = ds.sample_coeffs(np.random.default_rng((args.seed, 1)))
    system = assemble(mesh, coeffs)
    asym = abs(system.a - system.a.T)
    from .sparse import factorize

    factorize(system.a)  # SPD sanity: factorization must succeed
    print(json.dumps({
        "nodes": mesh.n_nodes,
        "interior": system.n,
        "nnz": int(system.a.nnz),
        "max_asymmetry": float(asym.max()) if asym.nnz else 0.0,
        "factorizable": True,
    }))


def cmd_partition(args):
    mesh = _load_mesh_args(args)
    coeffs = ds.sample_coeffs(np.random.default_rng((args.seed, 1)))
    system = assemble(mesh, coeffs)
    owner = partition(system.a, args.subdomain_size, args.seed)
    dec = add_overlap(owner, system.a, args.overlap)
    with open(args.out, "w") as fh:
        fh.write(dec.to_json() + "\n")
    sizes = [int(s.size) for s in dec.subdomains]
    print(json.dumps({"K": dec.n_subdomains, "sizes": sizes, "out": args.out}))


def cmd_dataset(args):
    cfg = ds.DatasetConfig(
        n_problems=args.n_problems,
        problem=ds.ProblemConfig(
            target_nodes=args.target_nodes,
            perturbation=args.perturbation,
            subdomain_size=args.subdomain_size,
            overlap=args.overlap,
        ),
        tol=args.tol,
        max_iter=args.max_iter,
        seed=args.seed,
    )
    manifest = ds.generate(args.out, cfg)
    print(json.dumps({"n_samples": manifest["n_samples"],
                      "split_sizes": manifest["split_sizes"],
                      "skipped": len(manifest["skipped"]), "out": args.out}))


def cmd_train(args):
    train_graphs = [s.graph for s in ds.load_samples(f"{args.dataset}/train.jsonl")]
    val_graphs = [s.graph for s in ds.load_samples(f"{args.dataset}/val.jsonl")]
    model = init_model(args.k_bar, args.d, args.alpha, args.seed)
    cfg = TrainConfig(
        epochs=args.epochs,
        lr=args.lr,
        batch_size=args.batch_size,
        clip_norm=args.clip_norm,
        scheduler=SchedulerConfig(args.factor, args.patience, args.min_lr),
        seed=args.seed,
    )
    trained, log = train(model, train_graphs, val_graphs, cfg)
    save_model(trained, args.out)
    if args.log:
        with open(args.log, "w") as fh:
            fh.write(training_log_csv(log))
    print(json.dumps({"out": args.out, "epochs": len(log),
                      "final_train_loss": log[-1][1], "final_val_loss": log[-1][2]}))


def cmd_solve(args):
    mesh, system, dec, coords = _build_setup(args)
    model = load_model(args.model) if args.model else None
    _, report = _run_method(args.method, system, dec, coords, model, args.tol, args.max_iter)
    if args.history:
        with open(args.history, "w") as fh:
            fh.write("iteration,relres\n")
            for i, rel in enumerate(report.residual_history):
                fh.write(f"{i},{rel!r}\n")
    print(report.to_json())


def cmd_bench(args):
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r} (choose from {', '.join(METHODS)})")
    sizes = [int(v) for v in args.sizes.split(",")]
    sub_sizes = [int(v) for v in args.subdomain_sizes.split(",")]
    overlaps = [int(v) for v in args.overlaps.split(",")]
    model = load_model(args.model) if args.model else None
    base_rng = np.random.default_rng(args.seed)
    problem_seeds = [int(s) for s in base_rng.integers(0, 2**62, size=args.problems)]

    rows = []
    for n_target in sizes:
        for pseed in problem_seeds:
            mesh = generate_blob_mesh(pseed, n_target, args.perturbation)
            coeffs = ds.sample_coeffs(np.random.default_rng((pseed, 1)))
            system = assemble(mesh, coeffs)
            coords = mesh.coords[system.node_of_interior]
            for sub_size in sub_sizes:
                owner = partition(system.a, sub_size, pseed)
                for overlap in overlaps:
                    dec = add_overlap(owner, system.a, overlap)
                    for method in methods:
                        t0 = time.perf_counter()
                        _, report = _run_method(
                            method, system, dec, coords, model, args.tol, args.max_iter
                        )
                        wall = time.perf_counter() - t0
                        rows.append({
                            "N": system.n,
                            "N_s": sub_size,
                            "K": dec.n_subdomains,
                            "overlap": overlap,
                            "method": method,
                            "iterations": report.iterations,
                            "converged": report.converged,
                            "final_relres": report.final_relres,
                            "wall_time_seconds": wall,
                        })

    rows.sort(key=lambda r: (r["N"], r["N_s"], r["overlap"], r["method"]))
    fields = ["N", "N_s", "K", "overlap", "method", "iterations",
              "converged", "final_relres", "wall_time_seconds"]
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    manifest = {
        "seed": args.seed,
        "problem_seeds": problem_seeds,
        "sizes": sizes,
        "subdomain_sizes": sub_sizes,
        "overlaps": overlaps,
        "methods": methods,
        "tol": args.tol,
        "max_iter": args.max_iter,
        "perturbation": args.perturbation,
        "model": args.model,
    }
    if args.manifest:
        with open(args.manifest, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    print(json.dumps({"rows": len(rows), "out": args.out}))


def _add_common_problem_flags(p, subdomain: bool = True):
    p.add_argument("--mesh", help="mesh file (otherwise a blob mesh is generated)")
    p.add_argument("--target-nodes", type=int, default=900)
    p.add_argument("--perturbation", type=float, default=0.2)
    if subdomain:
        p.add_argument("--subdomain-size", type=int, default=150)
        p.add_argument("--overlap", type=int, default=2)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddmgnn", description=__doc__)
    parser.add_argument("--config", help="JSON file of flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh-gen", help="generate a mesh file")
    p.add_argument("--kind", choices=("blob", "rect"), default="blob")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--target-nodes", type=int, default=900)
    p.add_argument("--perturbation", type=float, default=0.2)
    p.add_argument("--nx", type=int, default=16)
    p.add_argument("--ny", type=int, default=16)
    p.add_argument("--lx", type=float, default=1.0)
    p.add_argument("--ly", type=float, default=1.0)
    p.add_argument("--holes", help="cell-index rectangles 'i0,j0,i1,j1;...'")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mesh_gen)

    p = sub.add_parser("assemble-check", help="assemble a random problem and report system stats")
    _add_common_problem_flags(p, subdomain=False)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_assemble_check)

    p = sub.add_parser("partition", help="build and store an overlapping decomposition")
    _add_common_problem_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("dataset", help="generate a training corpus")
    p.add_argument("--n-problems", type=int, default=20)
    p.add_argument("--target-nodes", type=int, default=900)
    p.add_argument("--perturbation", type=float, default=0.2)
    p.add_argument("--subdomain-size", type=int, default=150)
    p.add_argument("--overlap", type=int, default=2)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("train", help="train a model on a generated dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--k-bar", type=int, default=10)
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--alpha", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--clip-norm", type=float, default=1e-2)
    p.add_argument("--factor", type=float, default=0.1)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--min-lr", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="write the per-epoch CSV log here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("solve", help="solve one random problem and print the report")
    _add_common_problem_flags(p)
    p.add_argument("--method", choices=METHODS, default="ddm-lu-2")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", help="model file (required for ddm-gnn)")
    p.add_argument("--history", help="write the residual-history CSV here")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="sweep methods over problems and write a CSV")
    p.add_argument("--sizes", default="2500", help="comma-separated target node counts")
    p.add_argument("--subdomain-sizes", default="300")
    p.add_argument("--overlaps", default="2")
    p.add_argument("--methods", default="cg,ddm-lu-2")
    p.add_argument("--problems", type=int, default=10)
    p.add_argument("--perturbation", type=float, default=0.2)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", help="model file (required when methods include ddm-gnn)")
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", help="write the sweep manifest JSON here")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    # first pass only to locate --config; a config file supplies defaults
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if known.config:
        try:
            with open(known.config) as fh:
                overrides = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return 1
        for action in parser._subparsers._group_actions[0].choices.values():
            action.set_defaults(**{k: v for k, v in overrides.items()})
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - internal failures get exit code 2
        print(f"internal error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
