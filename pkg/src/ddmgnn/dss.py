"""Trainable message-passing solver for local Poisson problems.

The model carries distinct weights for each of its k_bar message-passing
iterations.  Per iteration, two edge MLPs aggregate outgoing and ingoing
messages built from the endpoint latent states and the relative node
positions, a node MLP updates the latent state through a damped residual
connection, and a decoder reads a scalar field off the latent state.  The
training loss is the physics-informed mean squared residual of the local
system, summed over the intermediate decoded outputs of every iteration.

Everything runs in float64 numpy.  Gradients are hand-written reverse-mode:
the forward trace caches latent states and decoded outputs, and backward
rematerializes the MLP pre-activations from them, which keeps trace memory
proportional to node count rather than edge count.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Mlp",
    "IterationWeights",
    "DssModel",
    "LocalGraph",
    "GraphBatch",
    "ForwardTrace",
    "param_count",
    "init_model",
    "local_graph_from_matrix",
    "forward",
    "residual_loss",
    "training_loss",
    "backward",
    "SchedulerConfig",
    "TrainConfig",
    "train",
    "evaluate",
    "training_log_csv",
    "save_model",
    "load_model",
]


# ---------------------------------------------------------------------------
# model


@dataclass
class Mlp:
    """One-hidden-layer perceptron: relu(x @ w1 + b1) @ w2 + b2."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass
class IterationWeights:
    phi_out: Mlp  # outgoing-message MLP, input (2d+3)
    phi_in: Mlp   # ingoing-message MLP, input (2d+3)
    psi: Mlp      # latent-update MLP, input (3d+1)
    dec: Mlp      # decoder, input d, output 1


@dataclass
class DssModel:
    k_bar: int
    d: int
    alpha: float
    seed: int
    layers: list[IterationWeights]

    def n_params(self) -> int:
        return sum(arr.size for arr in _param_arrays(self))


def param_count(k_bar: int, d: int) -> int:
    """Closed-form trainable parameter count."""
    return k_bar * (11 * d * d + 15 * d + 1)


def _mlp_arrays(mlp: Mlp):
    return (mlp.w1, mlp.b1, mlp.w2, mlp.b2)


def _param_arrays(model_or_grad) -> list[np.ndarray]:
    """All weight arrays in the canonical (serialization) order."""
    out = []
    for layer in model_or_grad.layers:
        for mlp in (layer.phi_out, layer.phi_in, layer.psi, layer.dec):
            out.extend(_mlp_arrays(mlp))
    return out


def _xavier_mlp(rng: np.random.Generator, n_in: int, n_hidden: int, n_out: int) -> Mlp:
    a1 = np.sqrt(6.0 / (n_in + n_hidden))
    w1 = rng.uniform(-a1, a1, (n_in, n_hidden))
    a2 = np.sqrt(6.0 / (n_hidden + n_out))
    w2 = rng.uniform(-a2, a2, (n_hidden, n_out))
    return Mlp(w1, np.zeros(n_hidden), w2, np.zeros(n_out))


def init_model(k_bar: int, d: int, alpha: float = 1e-3, seed: int = 0) -> DssModel:
    """Xavier-uniform weights, zero biases, deterministic per seed."""
    if k_bar < 1 or d < 1:
        raise ValueError("k_bar and d must be >= 1")
    rng = np.random.default_rng(seed)
    layers = []
    for _ in range(k_bar):
        layers.append(
            IterationWeights(
                phi_out=_xavier_mlp(rng, 2 * d + 3, d, d),
                phi_in=_xavier_mlp(rng, 2 * d + 3, d, d),
                psi=_xavier_mlp(rng, 3 * d + 1, d, d),
                dec=_xavier_mlp(rng, d, d, 1),
            )
        )
    model = DssModel(k_bar, d, alpha, seed, layers)
    assert model.n_params() == param_count(k_bar, d)
    return model


def _zeros_like_model(model: DssModel) -> DssModel:
    zero_layers = [
        IterationWeights(
            *(
                Mlp(*(np.zeros_like(a) for a in _mlp_arrays(m)))
                for m in (lay.phi_out, lay.phi_in, lay.psi, lay.dec)
            )
        )
        for lay in model.layers
    ]
    return DssModel(model.k_bar, model.d, model.alpha, model.seed, zero_layers)


# ---------------------------------------------------------------------------
# graphs


@dataclass
class LocalGraph:
    """One subdomain problem as a geometric graph.

    edges holds both directions of every mesh edge, sorted by (src, dst);
    edge_vec[e] = coords[dst] - coords[src].  ``c`` is the normalized local
    residual (the model input) and ``scale`` the norm removed from it.
    ``a_local`` is only needed to evaluate the residual loss.
    """

    coords: np.ndarray
    edges: np.ndarray
    edge_vec: np.ndarray
    edge_len: np.ndarray
    a_local: sp.csr_matrix
    c: np.ndarray | None = None
    scale: float = 0.0

    @property
    def node_count(self) -> int:
        return self.coords.shape[0]

    def with_residual(self, c: np.ndarray, scale: float) -> "LocalGraph":
        return replace(self, c=c, scale=scale)


def local_graph_from_matrix(
    a_local: sp.csr_matrix, coords: np.ndarray, c: np.ndarray | None = None, scale: float = 0.0
) -> LocalGraph:
    """Build the directed edge structure from the off-diagonal pattern of a symmetric matrix."""
    coo = a_local.tocoo()
    mask = coo.row != coo.col
    src = coo.row[mask].astype(np.int64)
    dst = coo.col[mask].astype(np.int64)
    order = np.lexsort((dst, src))
    edges = np.column_stack((src[order], dst[order]))
    coords = np.asarray(coords, dtype=float)
    edge_vec = coords[edges[:, 1]] - coords[edges[:, 0]]
    edge_len = np.hypot(edge_vec[:, 0], edge_vec[:, 1])
    return LocalGraph(coords, edges, edge_vec, edge_len, a_local.tocsr(), c, scale)


class GraphBatch:
    """Concatenation of local graphs with per-node scatter matrices.

    Forward/backward on a batch is bitwise identical to running each graph
    separately: all operations are row-local, and message aggregation sums
    each node's incident edges in their original order.
    """

    def __init__(self, graphs: list[LocalGraph]):
        if not graphs:
            raise ValueError("empty graph batch")
        for g in graphs:
            if g.c is None:
                raise ValueError("local graph has no residual loaded")
        self.graphs = graphs
        counts = np.array([g.node_count for g in graphs], dtype=np.int64)
        self.node_offsets = np.concatenate(([0], np.cumsum(counts)))
        self.n_nodes = int(self.node_offsets[-1])
        self.coords = np.vstack([g.coords for g in graphs])
        self.edges = np.vstack(
            [g.edges + off for g, off in zip(graphs, self.node_offsets[:-1])]
        )
        self.edge_vec = np.vstack([g.edge_vec for g in graphs])
        self.edge_len = np.concatenate([g.edge_len for g in graphs])
        self.c = np.concatenate([g.c for g in graphs])
        n_edges = self.edges.shape[0]
        ar = np.arange(n_edges)
        ones = np.ones(n_edges)
        self.scatter_src = sp.csr_matrix(
            (ones, (self.edges[:, 0], ar)), shape=(self.n_nodes, n_edges)
        )
        self.scatter_dst = sp.csr_matrix(
            (ones, (self.edges[:, 1], ar)), shape=(self.n_nodes, n_edges)
        )

    @staticmethod
    def from_graphs(graphs: list[LocalGraph]) -> "GraphBatch":
        return GraphBatch(graphs)

    def segments(self):
        for g, start, end in zip(self.graphs, self.node_offsets[:-1], self.node_offsets[1:]):
            yield g, int(start), int(end)


def _as_batch(g) -> GraphBatch:
    return g if isinstance(g, GraphBatch) else GraphBatch([g])


@dataclass
class ForwardTrace:
    """Latent states H^0..H^k_bar, decoded outputs r_hat^1..r_hat^k_bar, and the
    aggregated messages of each iteration (cached for backprop; edge-level
    pre-activations are rematerialized instead of stored)."""

    batch: GraphBatch
    latents: list[np.ndarray]
    outputs: list[np.ndarray]
    messages: list[tuple[np.ndarray, np.ndarray]]

    @property
    def final_output(self) -> np.ndarray:
        return self.outputs[-1]


# ---------------------------------------------------------------------------
# forward / loss / backward


def _mlp_forward(mlp: Mlp, x: np.ndarray) -> np.ndarray:
    return np.maximum(x @ mlp.w1 + mlp.b1, 0.0) @ mlp.w2 + mlp.b2


def _mlp_backward(mlp: Mlp, grad: Mlp, x: np.ndarray, dout: np.ndarray) -> np.ndarray:
    """Accumulate weight gradients into ``grad`` and return d(loss)/dx."""
    y = x @ mlp.w1 + mlp.b1
    z = np.maximum(y, 0.0)
    grad.w2 += z.T @ dout
    grad.b2 += dout.sum(axis=0)
    dy = (dout @ mlp.w2.T) * (y > 0.0)
    grad.w1 += x.T @ dy
    grad.b1 += dy.sum(axis=0)
    return dy @ mlp.w1.T


def _edge_buffer(batch: GraphBatch, d: int) -> np.ndarray:
    """Edge-input buffer [h_src, h_dst, dx, dy, |d|]; latent columns refilled per iteration."""
    x = np.empty((batch.edges.shape[0], 2 * d + 3))
    x[:, 2 * d : 2 * d + 2] = batch.edge_vec
    x[:, 2 * d + 2] = batch.edge_len
    return x


def _phi_cat_weights(w: IterationWeights, d: int):
    """Stacked hidden-layer weights of both message MLPs.

    The ingoing MLP consumes the same edge inputs with the relative position
    negated; folding that sign flip into its weight rows lets one GEMM feed
    both MLPs from the outgoing-orientation inputs.
    """
    w1_in = w.phi_in.w1.copy()
    w1_in[2 * d : 2 * d + 2] *= -1.0
    return np.hstack((w.phi_out.w1, w1_in)), np.concatenate((w.phi_out.b1, w.phi_in.b1))


def _node_inputs(batch: GraphBatch, h: np.ndarray, phi_o: np.ndarray, phi_i: np.ndarray, d: int):
    x = np.empty((batch.n_nodes, 3 * d + 1))
    x[:, :d] = h
    x[:, d] = batch.c
    x[:, d + 1 : 2 * d + 1] = phi_o
    x[:, 2 * d + 1 :] = phi_i
    return x


def forward(model: DssModel, g) -> ForwardTrace:
    """Run all message-passing iterations; cache latents, outputs, and messages."""
    batch = _as_batch(g)
    d = model.d
    src, dst = batch.edges[:, 0], batch.edges[:, 1]
    x_edge = _edge_buffer(batch, d)
    h = np.zeros((batch.n_nodes, d))
    latents = [h]
    outputs = []
    messages = []
    for k, w in enumerate(model.layers, start=1):
        np.take(h, src, axis=0, out=x_edge[:, :d])
        np.take(h, dst, axis=0, out=x_edge[:, d : 2 * d])
        w1_cat, b1_cat = _phi_cat_weights(w, d)
        z_cat = x_edge @ w1_cat
        z_cat += b1_cat
        np.maximum(z_cat, 0.0, out=z_cat)
        m_out = z_cat[:, :d] @ w.phi_out.w2 + w.phi_out.b2
        m_in = z_cat[:, d:] @ w.phi_in.w2 + w.phi_in.b2
        phi_o = batch.scatter_src @ m_out
        phi_i = batch.scatter_src @ m_in
        h = h + model.alpha * _mlp_forward(w.psi, _node_inputs(batch, h, phi_o, phi_i, d))
        if not np.all(np.isfinite(h)):
            raise RuntimeError(f"non-finite latent state at message-passing iteration {k}")
        latents.append(h)
        outputs.append(_mlp_forward(w.dec, h)[:, 0])
        messages.append((phi_o, phi_i))
    return ForwardTrace(batch, latents, outputs, messages)


def residual_loss(u: np.ndarray, g: LocalGraph) -> float:
    """Mean squared residual (1/k) * ||A_local u - c||^2 of one local problem."""
    u = np.asarray(u, dtype=float)
    if u.shape != (g.node_count,):
        raise ValueError(f"expected vector of length {g.node_count}, got shape {u.shape}")
    r = g.a_local @ u - g.c
    return float(r @ r) / g.node_count


def training_loss(trace: ForwardTrace, g=None) -> float:
    """Sum of the residual losses of every intermediate output (summed over graphs)."""
    total = 0.0
    for graph, start, end in trace.batch.segments():
        for out in trace.outputs:
            total += residual_loss(out[start:end], graph)
    return total


def backward(model: DssModel, g, trace: ForwardTrace) -> DssModel:
    """Exact gradient of training_loss w.r.t. every weight (summed over graphs).

    ``trace`` must come from ``forward(model, g)``; its cached batch is the
    authoritative graph data.
    """
    batch = trace.batch
    d = model.d
    grads = _zeros_like_model(model)
    src, dst = batch.edges[:, 0], batch.edges[:, 1]
    x_edge = _edge_buffer(batch, d)
    dh = np.zeros((batch.n_nodes, d))
    for k in range(model.k_bar, 0, -1):
        w = model.layers[k - 1]
        gw = grads.layers[k - 1]
        h_k = trace.latents[k]
        h_prev = trace.latents[k - 1]
        out = trace.outputs[k - 1]
        phi_o, phi_i = trace.messages[k - 1]

        # d(loss)/d(output_k), per graph: (2/k_i) * A_i (A_i u - c)
        dout = np.empty(batch.n_nodes)
        for graph, start, end in batch.segments():
            r = graph.a_local @ out[start:end] - graph.c
            dout[start:end] = (2.0 / graph.node_count) * (graph.a_local @ r)

        dh += _mlp_backward(w.dec, gw.dec, h_k, dout[:, None])

        # update block: h_k = h_prev + alpha * psi([h_prev, c, phi_o, phi_i])
        x_node = _node_inputs(batch, h_prev, phi_o, phi_i, d)
        dx_node = _mlp_backward(w.psi, gw.psi, x_node, model.alpha * dh)
        dh_prev = dh + dx_node[:, :d]
        dm_out = dx_node[:, d + 1 : 2 * d + 1][src]
        dm_in = dx_node[:, 2 * d + 1 :][src]

        # message MLPs share the outgoing-orientation edge inputs (sign flip
        # folded into the ingoing hidden weights, see _phi_cat_weights);
        # z > 0 is the same mask as y > 0, so the relu can run in place
        np.take(h_prev, src, axis=0, out=x_edge[:, :d])
        np.take(h_prev, dst, axis=0, out=x_edge[:, d : 2 * d])
        w1_cat, b1_cat = _phi_cat_weights(w, d)
        z_cat = x_edge @ w1_cat
        z_cat += b1_cat
        np.maximum(z_cat, 0.0, out=z_cat)
        gw.phi_out.w2 += z_cat[:, :d].T @ dm_out
        gw.phi_out.b2 += dm_out.sum(axis=0)
        gw.phi_in.w2 += z_cat[:, d:].T @ dm_in
        gw.phi_in.b2 += dm_in.sum(axis=0)
        dy_cat = np.empty_like(z_cat)
        dy_cat[:, :d] = dm_out @ w.phi_out.w2.T
        dy_cat[:, d:] = dm_in @ w.phi_in.w2.T
        dy_cat *= z_cat > 0.0
        gw1_cat = x_edge.T @ dy_cat
        gw.phi_out.w1 += gw1_cat[:, :d]
        gw1_in = gw1_cat[:, d:].copy()
        gw1_in[2 * d : 2 * d + 2] *= -1.0  # undo the folded sign flip
        gw.phi_in.w1 += gw1_in
        gw.phi_out.b1 += dy_cat[:, :d].sum(axis=0)
        gw.phi_in.b1 += dy_cat[:, d:].sum(axis=0)
        dx_edge = dy_cat @ w1_cat.T  # positional columns unused
        dh_prev += batch.scatter_src @ dx_edge[:, :d]
        dh_prev += batch.scatter_dst @ dx_edge[:, d : 2 * d]
        dh = dh_prev
    return grads


# ---------------------------------------------------------------------------
# training


@dataclass
class SchedulerConfig:
    factor: float = 0.1
    patience: int = 10
    min_lr: float = 1e-5


@dataclass
class TrainConfig:
    epochs: int
    lr: float = 1e-2
    batch_size: int = 100
    clip_norm: float = 1e-2
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    seed: int = 0


def _global_norm(arrays) -> float:
    return float(np.sqrt(sum(float(a.ravel() @ a.ravel()) for a in arrays)))


def evaluate(model: DssModel, graphs: list[LocalGraph], batch_size: int = 100) -> float:
    """Mean per-graph training loss over a list of graphs."""
    if not graphs:
        return float("nan")
    total = 0.0
    for start in range(0, len(graphs), batch_size):
        chunk = graphs[start : start + batch_size]
        total += training_loss(forward(model, GraphBatch(chunk)))
    return total / len(graphs)


def train(model: DssModel, train_graphs, val_graphs, config: TrainConfig):
    """Adam with global-norm gradient clipping and plateau lr scheduling.

    Returns a freshly trained copy of the model and the per-epoch log
    [(epoch, train_loss, val_loss, lr), ...].  Deterministic for a fixed
    config seed: the seed drives the per-epoch shuffle only.
    """
    if not train_graphs:
        raise ValueError("empty training set")
    model = copy.deepcopy(model)
    params = _param_arrays(model)
    m_state = [np.zeros_like(p) for p in params]
    v_state = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    lr = config.lr
    rng = np.random.default_rng(config.seed)
    best_val = np.inf
    bad_epochs = 0
    log = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(train_graphs))
        loss_sum = 0.0
        for b, start in enumerate(range(0, len(order), config.batch_size)):
            chunk = [train_graphs[i] for i in order[start : start + config.batch_size]]
            gb = GraphBatch(chunk)
            trace = forward(model, gb)
            batch_sum = training_loss(trace)
            if not np.isfinite(batch_sum):
                raise RuntimeError(f"non-finite loss at epoch {epoch}, batch {b}")
            loss_sum += batch_sum
            grads = backward(model, gb, trace)
            grad_arrays = _param_arrays(grads)
            inv_b = 1.0 / len(chunk)
            for ga in grad_arrays:
                ga *= inv_b
            gnorm = _global_norm(grad_arrays)
            if gnorm > config.clip_norm and gnorm > 0:
                scale = config.clip_norm / gnorm
                for ga in grad_arrays:
                    ga *= scale
            step += 1
            bc1 = 1.0 - beta1**step
            bc2 = 1.0 - beta2**step
            for p, m, v, ga in zip(params, m_state, v_state, grad_arrays):
                m *= beta1
                m += (1.0 - beta1) * ga
                v *= beta2
                v += (1.0 - beta2) * ga * ga
                p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        train_loss = loss_sum / len(train_graphs)
        val_loss = evaluate(model, list(val_graphs), config.batch_size)
        log.append((epoch, train_loss, val_loss, lr))
        if val_graphs:
            if val_loss < best_val:
                best_val = val_loss
                bad_epochs = 0
            else:
                bad_epochs += 1
                if bad_epochs > config.scheduler.patience:
                    new_lr = max(lr * config.scheduler.factor, config.scheduler.min_lr)
                    if new_lr < lr:  # never raise the rate toward min_lr
                        lr = new_lr
                    bad_epochs = 0
    return model, log


def training_log_csv(log) -> str:
    lines = ["epoch,train_loss,val_loss,lr"]
    for epoch, train_loss, val_loss, lr in log:
        lines.append(f"{epoch},{train_loss!r},{val_loss!r},{lr!r}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# serialization


def save_model(model: DssModel, path: str) -> None:
    """JSON header line + little-endian float64 blocks in canonical layer order."""
    header = json.dumps(
        {
            "format": "dss-v1",
            "k_bar": model.k_bar,
            "d": model.d,
            "alpha": model.alpha,
            "seed": model.seed,
        }
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii") + b"\n")
        for arr in _param_arrays(model):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_model(path: str) -> DssModel:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        blob = fh.read()
    try:
        header = json.loads(header_line.decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValueError(f"malformed model header: {exc}") from exc
    if header.get("format") != "dss-v1":
        raise ValueError(f"unsupported model format {header.get('format')!r}")
    k_bar, d = int(header["k_bar"]), int(header["d"])
    skeleton = init_model(k_bar, d, float(header["alpha"]), seed=int(header["seed"]))
    arrays = _param_arrays(skeleton)
    expected = sum(a.size for a in arrays) * 8
    if len(blob) != expected:
        raise ValueError(
            f"weight block size mismatch: expected {expected} bytes for "
            f"k_bar={k_bar}, d={d}, got {len(blob)}"
        )
    flat = np.frombuffer(blob, dtype="<f8")
    pos = 0
    for arr in arrays:
        arr[...] = flat[pos : pos + arr.size].reshape(arr.shape)
        pos += arr.size
    return skeleton
