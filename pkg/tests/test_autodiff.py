"""Gradient, layer and optimizer checks for the tensor library."""

import numpy as np
import pytest

from cortexmap.autodiff import (
    LARS,
    AutodiffError,
    BatchNorm,
    Conv2d,
    GlobalAvgPool,
    Linear,
    MaxPool2d,
    SGDNesterov,
    ShapeError,
    Tape,
    Tensor,
    backward,
    concat,
    dropout,
    exp,
    gather,
    leaky_relu,
    load_checkpoint,
    log,
    matmul,
    maximum_const,
    no_grad,
    relu,
    reshape,
    save_checkpoint,
    segment_sum,
    sqrt,
    square,
    tmean,
    transpose,
    tsum,
)

from conftest import grad_check, param64


def test_tensor_basics():
    t = Tensor(np.arange(6).reshape(2, 3))
    assert t.dtype == np.float32  # ints are promoted to the default dtype
    assert t.shape == (2, 3)
    assert Tensor(t).data is t.data
    t64 = Tensor(np.ones(3, dtype=np.float64))
    assert t64.dtype == np.float64


def test_ops_without_tape_do_not_track():
    x = Tensor(np.ones((2, 2), dtype=np.float64), requires_grad=True)
    y = (x * 2.0 + 1.0).sum()
    assert x.grad is None
    assert float(y.data) == 12.0


def test_backward_requires_scalar_loss():
    x = Tensor(np.ones(3, dtype=np.float64), requires_grad=True)
    with Tape() as tape:
        y = x * 2.0
    with pytest.raises(AutodiffError):
        backward(tape, y)


def test_no_grad_suppresses_recording():
    x = Tensor(np.ones(3, dtype=np.float64), requires_grad=True)
    with Tape() as tape:
        with no_grad():
            y = (x * 3.0).sum()
        z = (x * 2.0).sum()
        backward(tape, z)
    assert np.allclose(x.grad, 2.0)
    assert float(y.data) == 9.0


def test_gradient_accumulates_across_uses():
    x = Tensor(np.full(4, 2.0, dtype=np.float64), requires_grad=True)
    with Tape() as tape:
        y = (x * x + x).sum()
        backward(tape, y)
    assert np.allclose(x.grad, 2 * 2.0 + 1)


ELEMENTWISE_CASES = [
    ("add", lambda a, b: a + b),
    ("sub", lambda a, b: a - b),
    ("mul", lambda a, b: a * b),
    ("div", lambda a, b: a / (b * b + 1.0)),
    ("matmul", lambda a, b: matmul(a, transpose(b))),
]


@pytest.mark.parametrize("name,op", ELEMENTWISE_CASES)
def test_binary_op_gradients(name, op):
    rng = np.random.default_rng(hash(name) % (2**31))
    a = param64(rng, (4, 5))
    b = param64(rng, (4, 5))
    err = grad_check(lambda: tsum(square(op(a, b))), [a, b])
    assert err < 1e-6, f"{name}: {err}"


def test_broadcast_gradients():
    rng = np.random.default_rng(7)
    a = param64(rng, (4, 5))
    b = param64(rng, (1, 5))
    c = param64(rng, ())
    err = grad_check(lambda: tsum(square(a * b + c)), [a, b, c])
    assert err < 1e-6


UNARY_CASES = [
    ("exp", lambda a: exp(a * 0.3)),
    ("log", lambda a: log(square(a) + 1.0)),
    ("sqrt", lambda a: sqrt(square(a) + 0.5)),
    ("relu", lambda a: relu(a)),
    ("leaky_relu", lambda a: leaky_relu(a, alpha=0.2)),
    ("maximum_const", lambda a: maximum_const(a, 0.1)),
    ("square", square),
    ("tmean", lambda a: tmean(square(a), axis=1, keepdims=True)),
    ("tsum_axis", lambda a: tsum(square(a), axis=0)),
    ("reshape", lambda a: reshape(square(a), (5, 4))),
    ("transpose", lambda a: transpose(square(a))),
]


@pytest.mark.parametrize("name,op", UNARY_CASES)
def test_unary_op_gradients(name, op):
    rng = np.random.default_rng(abs(hash(name)) % (2**31))
    a = param64(rng, (4, 5))
    a.data += np.sign(a.data) * 0.2  # keep away from relu kinks
    err = grad_check(lambda: tsum(square(tsum(op(a), keepdims=True))), [a])
    assert err < 1e-6, f"{name}: {err}"


def test_structural_op_gradients():
    rng = np.random.default_rng(11)
    a = param64(rng, (6, 3))
    b = param64(rng, (2, 3))
    idx = np.array([0, 5, 2, 2])
    seg = np.array([0, 1, 0, 1, 2, 2])

    err = grad_check(lambda: tsum(square(gather(a, idx))), [a])
    assert err < 1e-6
    err = grad_check(lambda: tsum(square(segment_sum(a, seg, 3))), [a])
    assert err < 1e-6
    err = grad_check(lambda: tsum(square(concat([a, b], axis=0))), [a, b])
    assert err < 1e-6


def test_dropout_train_scaling_and_gradient():
    rng = np.random.default_rng(3)
    x = Tensor(np.ones((2000,), dtype=np.float64), requires_grad=True)
    out = dropout(x, 0.25, rng=np.random.default_rng(0), train=True)
    kept = out.data != 0
    # inverted scaling keeps the expectation
    assert np.allclose(out.data[kept], 1 / 0.75)
    assert abs(kept.mean() - 0.75) < 3 * np.sqrt(0.25 * 0.75 / 2000)
    # eval mode is the identity
    ev = dropout(x, 0.25, rng=rng, train=False)
    assert np.array_equal(ev.data, x.data)
    # gradient flows only through kept units, with the same scaling
    with Tape() as tape:
        out = dropout(x, 0.25, rng=np.random.default_rng(0), train=True)
        backward(tape, tsum(out))
    assert np.allclose(x.grad[kept], 1 / 0.75)
    assert np.allclose(x.grad[~kept], 0.0)


@pytest.mark.parametrize("seed", range(6))
def test_conv2d_gradients(seed):
    rng = np.random.default_rng(100 + seed)
    k = int(rng.integers(1, 4))
    stride = int(rng.integers(1, 3))
    pad = rng.choice(["none", "zero"])
    cin, cout = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    h = int(rng.integers(k + 2, k + 6))
    conv = Conv2d(cin, cout, k, stride=stride, padding=pad, rng=rng,
                  dtype=np.float64)
    x = param64(rng, (2, cin, h, h))
    params = [x, conv.weight, conv.bias]
    err = grad_check(lambda: tsum(square(conv.forward(x))), params)
    assert err < 1e-6


@pytest.mark.parametrize("ndim", [2, 4])
def test_batchnorm_gradients(ndim):
    rng = np.random.default_rng(40 + ndim)
    bn = BatchNorm(3, dtype=np.float64)
    shape = (5, 3) if ndim == 2 else (4, 3, 3, 2)
    x = param64(rng, shape, scale=2.0)
    params = [x, bn.gamma, bn.beta]
    # an asymmetric weighting; the plain sum of squared standardized values
    # is invariant to x and would make the check vacuous
    w = Tensor(rng.normal(size=shape), dtype=np.float64)

    def loss():
        bn.running_mean[:] = 0  # keep the loss deterministic across calls
        bn.running_var[:] = 1
        return tsum(square(bn.forward(x, train=True) * w + 0.3))

    err = grad_check(loss, params)
    assert err < 1e-6


def test_batchnorm_running_statistics():
    rng = np.random.default_rng(9)
    bn = BatchNorm(4, momentum=0.1, dtype=np.float64)
    x = Tensor(rng.normal(2.0, 3.0, size=(512, 4)), dtype=np.float64)
    out = bn.forward(x, train=True)
    # train mode standardizes the batch
    assert np.allclose(out.data.mean(axis=0), 0.0, atol=1e-10)
    assert np.allclose(out.data.std(axis=0), 1.0, atol=1e-6)
    expected_mean = 0.1 * x.data.mean(axis=0)
    assert np.allclose(bn.running_mean, expected_mean)
    # eval mode uses the running statistics, not the batch
    y = Tensor(np.zeros((2, 4)), dtype=np.float64)
    out_eval = bn.forward(y, train=False)
    expect = (0.0 - bn.running_mean) / np.sqrt(bn.running_var + bn.eps)
    assert np.allclose(out_eval.data, expect[None, :])


def test_linear_and_pool_gradients():
    rng = np.random.default_rng(5)
    fc = Linear(6, 4, rng=rng, dtype=np.float64)
    x = param64(rng, (3, 6))
    err = grad_check(lambda: tsum(square(fc.forward(x))), [x, fc.weight, fc.bias])
    assert err < 1e-6

    pool = MaxPool2d(2, 2)
    xp = param64(rng, (2, 3, 6, 6))
    err = grad_check(lambda: tsum(square(pool.forward(xp))), [xp])
    assert err < 1e-6

    gap = GlobalAvgPool()
    err = grad_check(lambda: tsum(square(gap.forward(xp))), [xp])
    assert err < 1e-6


def test_maxpool_forward_matches_blocks():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(1, 1, 4, 4))
    out = MaxPool2d(2, 2).forward(Tensor(x, dtype=np.float64))
    expect = x.reshape(1, 1, 2, 2, 2, 2).max(axis=(3, 5))
    assert np.array_equal(out.data, expect)


def test_shape_errors_name_the_offender():
    with pytest.raises(ShapeError, match="channels"):
        Conv2d(3, 4, 3).forward(Tensor(np.zeros((1, 2, 8, 8))))
    with pytest.raises(ShapeError, match="kernel"):
        Conv2d(1, 1, 5).forward(Tensor(np.zeros((1, 1, 3, 3))))
    with pytest.raises(ShapeError, match="features"):
        Linear(4, 2).forward(Tensor(np.zeros((1, 3))))


def test_sgd_nesterov_two_steps_by_hand():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True, dtype=np.float64)
    opt = SGDNesterov([p], lr=0.1, momentum=0.9)
    g1 = np.array([0.5, 1.0])
    g2 = np.array([-0.25, 0.5])

    w, b = np.array([1.0, -2.0]), np.zeros(2)
    for g in (g1, g2):
        b = 0.9 * b + g
        w = w - 0.1 * (g + 0.9 * b)

    p.grad = g1.copy()
    opt.step()
    p.grad = g2.copy()
    opt.step()
    assert np.allclose(p.data, w, atol=1e-15)


def test_lars_trust_ratio_formula():
    rng = np.random.default_rng(1)
    w0 = rng.normal(size=(3, 3))
    g = rng.normal(size=(3, 3))
    p = Tensor(w0.copy(), requires_grad=True, dtype=np.float64)
    opt = LARS([p], lr=0.2, momentum=0.0, trust_coefficient=0.001,
               weight_decay=0.01)
    p.grad = g.copy()
    opt.step()
    g_wd = g + 0.01 * w0
    ratio = 0.001 * np.linalg.norm(w0) / (np.linalg.norm(g_wd)
                                          + 0.01 * np.linalg.norm(w0))
    assert np.allclose(p.data, w0 - 0.2 * ratio * g_wd, atol=1e-15)


def test_lars_zero_norm_degenerate():
    p = Tensor(np.zeros(4), requires_grad=True, dtype=np.float64)
    opt = LARS([p], lr=0.1, momentum=0.0, trust_coefficient=0.001)
    p.grad = np.ones(4)
    opt.step()
    assert np.allclose(p.data, -0.1 * 0.001 * np.ones(4))


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    params = {"layer.weight": rng.normal(size=(4, 3)).astype(np.float32),
              "layer.bias": rng.normal(size=3).astype(np.float32)}
    meta = {"note": "roundtrip", "value": 3}
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, params, meta)
    loaded, meta2 = load_checkpoint(path)
    assert meta2 == meta
    assert set(loaded) == set(params)
    for name in params:
        assert np.array_equal(loaded[name], params[name])
