"""Hybrid linear solver toolkit: PCG with multi-level Schwarz preconditioners
whose local solves are either direct factorizations or a trained
message-passing network."""

from .asm import AsmPreconditioner, apply_asm, asm_fixed_point, build_asm
from .dataset import (
    DatasetConfig,
    DatasetSample,
    ProblemConfig,
    build_problem,
    generate,
    load_samples,
    split,
)
from .decomp import Decomposition, add_overlap, extend, nicolaides, partition, restrict
from .dss import (
    DssModel,
    ForwardTrace,
    GraphBatch,
    LocalGraph,
    SchedulerConfig,
    TrainConfig,
    backward,
    forward,
    init_model,
    load_model,
    param_count,
    residual_loss,
    save_model,
    train,
    training_loss,
)
from .fem import LinearSystem, PolyCoeffs, assemble, element_stiffness, eval_poly, residual
from .hybrid import (
    DdmGnnPreconditioner,
    apply_ddm_gnn,
    apply_ddm_gnn_exact,
    build_ddm_gnn,
    build_local_graphs,
    plan_batches,
)
from .mesh import Mesh, export_mesh, generate_blob_mesh, generate_rect_mesh, import_mesh
from .sparse import Factorization, SolveReport, cg, factorize, ic0, pcg

__version__ = "0.1.0"
