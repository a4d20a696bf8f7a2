import numpy as np
import pytest

from cortexmap.autodiff import Tape, Tensor, backward


def numeric_grads(build_loss, tensors, eps=1e-5):
    """Central finite differences of a scalar loss w.r.t. each tensor.

    `build_loss` must be deterministic and is re-evaluated with perturbed
    entries; tensors should hold float64 data for meaningful comparisons.
    """
    grads = []
    for t in tensors:
        g = np.zeros_like(t.data)
        flat = t.data.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(build_loss().data)
            flat[i] = orig - eps
            lo = float(build_loss().data)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * eps)
        grads.append(g)
    return grads


def grad_check(build_loss, tensors, eps=1e-5):
    """Max relative error between backprop and finite differences."""
    for t in tensors:
        t.grad = None
    with Tape() as tape:
        loss = build_loss()
        backward(tape, loss)
    analytic = [np.array(t.grad if t.grad is not None else np.zeros_like(t.data))
                for t in tensors]
    numeric = numeric_grads(build_loss, tensors, eps=eps)
    # one shared scale: directions with exactly zero gradient (e.g. a bias
    # immediately normalized away by batch norm) must not divide by noise
    scale = max(max(np.abs(n).max() for n in numeric),
                max(np.abs(a).max() for a in analytic), 1e-8)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        worst = max(worst, float(np.abs(a - n).max() / scale))
    return worst


def param64(rng, shape, scale=1.0):
    return Tensor(rng.normal(0.0, scale, size=shape), requires_grad=True,
                  dtype=np.float64)


def random_graph(rng, n, p=0.1):
    """Random undirected simple graph as a CortexGraph."""
    from cortexmap.graph import CortexGraph

    iu = np.triu_indices(n, k=1)
    keep = rng.random(len(iu[0])) < p
    edges = np.column_stack([iu[0][keep], iu[1][keep]])
    return CortexGraph(
        positions=rng.normal(size=(n, 3)),
        edges=edges,
        section_ids=np.zeros(n, dtype=np.int32),
        coords=np.zeros((n, 2)),
    )


@pytest.fixture(scope="session")
def session_rng():
    return np.random.default_rng(20260824)
