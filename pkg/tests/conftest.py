import numpy as np
import pytest

from tgadapt import autodiff as ad
from tgadapt.graph import build_graph


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_graph():
    """Five nodes, hand-checkable adjacency, node + edge features."""
    src = [0, 1, 0, 2, 3, 1, 4, 0]
    dst = [1, 2, 2, 3, 4, 3, 0, 3]
    ts = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]
    nf = np.arange(5 * 3, dtype=np.float32).reshape(5, 3) / 10.0
    ef = np.arange(8 * 2, dtype=np.float32).reshape(8, 2) / 10.0
    return build_graph(src, dst, ts, num_nodes=5, node_features=nf, edge_features=ef)


def random_graph(rng, num_nodes=50, num_events=400, d_v=0, d_e=0):
    src = rng.integers(0, num_nodes, num_events)
    dst = rng.integers(0, num_nodes, num_events)
    ts = np.sort(rng.random(num_events) * 100.0)
    nf = rng.normal(size=(num_nodes, d_v)).astype(np.float32) if d_v else None
    ef = rng.normal(size=(num_events, d_e)).astype(np.float32) if d_e else None
    return build_graph(src, dst, ts, num_nodes=num_nodes,
                       node_features=nf, edge_features=ef)


def numeric_grad(f, tensor, eps=1e-6):
    """Central finite differences of the scalar ``f()`` w.r.t. tensor.data."""
    g = np.zeros_like(tensor.data)
    flat = tensor.data.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        lp = f().item()
        flat[i] = old - eps
        lm = f().item()
        flat[i] = old
        gflat[i] = (lp - lm) / (2 * eps)
    return g


def assert_grads_match(build_loss, store, rtol=1e-4, atol=1e-7, eps=1e-6):
    """Analytic gradients of every parameter in ``store`` vs central
    finite differences of the loss built by ``build_loss``."""
    store.zero_grad()
    loss = build_loss()
    ad.backward(loss)
    analytic = {name: (store[name].grad.copy() if store[name].grad is not None
                       else np.zeros_like(store[name].data))
                for name in store.names()}
    store.zero_grad()
    for name in store.names():
        num = numeric_grad(build_loss, store[name], eps=eps)
        np.testing.assert_allclose(analytic[name], num, rtol=rtol, atol=atol,
                                   err_msg=f"gradient mismatch for {name}")
