import numpy as np
import pytest
import scipy.sparse as sp

from ddmgnn.dss import init_model, local_graph_from_matrix, _param_arrays


def make_local_graph(seed, n=6):
    """Random connected symmetric SPD local problem with unit-norm residual."""
    rng = np.random.default_rng(seed)
    coords = rng.standard_normal((n, 2))
    pairs = [(i, (i + 1) % n) for i in range(n)] + [(0, n // 2)]
    rows, cols, vals = [], [], []
    for i, j in pairs:
        w = rng.uniform(0.5, 1.5)
        rows += [i, j]
        cols += [j, i]
        vals += [-w, -w]
    a = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    a = (a + sp.diags(-np.asarray(a.sum(axis=1)).ravel() + 1.0)).tocsr()
    a.sort_indices()
    c = rng.standard_normal(n)
    c /= np.linalg.norm(c)
    return local_graph_from_matrix(a, coords, c, 1.0)


def make_perturbed_model(seed, k_bar=2, d=3, alpha=0.5):
    """Xavier model with all parameters (biases included) randomly shifted.

    Zero biases put every ReLU exactly at its kink for the zero initial
    latent state; shifting off that measure-zero configuration is required
    for finite differences to agree with the one-sided subgradient.
    """
    model = init_model(k_bar, d, alpha=alpha, seed=seed)
    rng = np.random.default_rng((seed, 77))
    for arr in _param_arrays(model):
        arr += rng.uniform(-0.3, 0.3, arr.shape)
    return model


def finite_difference_max_rel(model, graph, step=1e-6):
    """Max relative component error of backward vs central differences."""
    from ddmgnn.dss import backward, forward, training_loss

    trace = forward(model, graph)
    grads = backward(model, graph, trace)
    max_rel = 0.0
    for arr, garr in zip(_param_arrays(model), _param_arrays(grads)):
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = arr[idx]
            arr[idx] = old + step
            loss_plus = training_loss(forward(model, graph))
            arr[idx] = old - step
            loss_minus = training_loss(forward(model, graph))
            arr[idx] = old
            fd = (loss_plus - loss_minus) / (2.0 * step)
            rel = abs(fd - garr[idx]) / max(abs(fd), abs(garr[idx]), 1e-8)
            max_rel = max(max_rel, rel)
    return max_rel


@pytest.fixture(scope="session")
def small_problem():
    """One assembled desk problem with decomposition, reused across tests."""
    from ddmgnn.dataset import ProblemConfig, build_problem

    return build_problem(21, ProblemConfig(target_nodes=500, perturbation=0.15,
                                           subdomain_size=100, overlap=2))
