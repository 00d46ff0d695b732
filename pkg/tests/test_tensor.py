import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chandiff.tensor import (
    Adam,
    AdamState,
    Conv2d,
    GroupNorm,
    Linear,
    SelfAttention2d,
    Tensor,
    adam_step,
    backward,
    bce_with_logits,
    concat,
    conv2d,
    grad,
    group_norm,
    matmul,
    no_grad,
    pad,
    silu,
    softmax,
    stack,
    upsample_nearest,
)
from chandiff.tensor import tensor as T

from gradcheck import numeric_grad, relative_error


def param(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


def test_matmul_identity():
    a = np.arange(12.0).reshape(3, 4)
    out = matmul(Tensor(np.eye(3)), Tensor(a))
    np.testing.assert_array_equal(out.data, a)


def test_reshape_round_trip():
    x = Tensor(np.random.default_rng(0).standard_normal((2, 3, 4)))
    back = x.reshape(6, 4).reshape(2, 3, 4)
    np.testing.assert_array_equal(back.data, x.data)


def test_conv_impulse_kernel_is_identity():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 5, 6, 3))
    w = np.zeros((3, 3, 3, 3))
    for c in range(3):
        w[1, 1, c, c] = 1.0
    out = conv2d(Tensor(x), Tensor(w))
    np.testing.assert_allclose(out.data, x, atol=0, rtol=0)


def test_conv_matches_direct_loop():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 5, 7, 3))
    w = rng.standard_normal((3, 3, 3, 4))
    b = rng.standard_normal(4)
    for stride in (1, 2):
        out = conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride).data
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        ho, wo = (5 + 2 - 3) // stride + 1, (7 + 2 - 3) // stride + 1
        ref = np.zeros((2, ho, wo, 4))
        for i in range(ho):
            for j in range(wo):
                patch = xp[:, i * stride : i * stride + 3, j * stride : j * stride + 3, :]
                ref[:, i, j, :] = np.einsum("nhwc,hwco->no", patch, w) + b
        np.testing.assert_allclose(out, ref, atol=1e-12)


def test_square_gradient():
    x = Tensor(3.0, requires_grad=True)
    backward(x * x)
    assert x.grad == pytest.approx(6.0)


def test_bilinear_gradient():
    rng = np.random.default_rng(3)
    a = param(rng, 4, 5)
    b = Tensor(rng.standard_normal((4, 5)))
    backward((a * b).sum())
    np.testing.assert_allclose(a.grad, b.data)
    assert b.grad is None


def test_backward_errors():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError, match="scalar"):
        backward(x * 2.0)
    with pytest.raises(RuntimeError, match="detached"):
        backward(Tensor(1.0))
    with no_grad():
        y = (x * 2.0).sum()
    with pytest.raises(RuntimeError):
        backward(y)


def test_shape_mismatch_error_names_op():
    with pytest.raises(ValueError, match="add.*\\(2, 3\\).*\\(4,\\)"):
        Tensor(np.ones((2, 3))) + Tensor(np.ones(4))
    with pytest.raises(ValueError, match="matmul"):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_non_finite_is_error():
    with pytest.raises(FloatingPointError, match="log"), np.errstate(invalid="ignore"):
        T.log(Tensor(np.array([-1.0, 1.0])))


def test_shared_node_visited_once():
    x = Tensor(2.0, requires_grad=True)
    y = x * x
    z = y + y + y
    backward(z)
    assert x.grad == pytest.approx(12.0)


OPS = {
    "add_broadcast": lambda rng: ((param(rng, 3, 4), param(rng, 1, 4)), lambda a, b: ((a + b) * (a - b)).sum()),
    "div": lambda rng: ((param(rng, 3, 4), Tensor(rng.uniform(1, 2, (3, 4)), requires_grad=True)), lambda a, b: (a / b).sum()),
    "power_exp_log": lambda rng: ((Tensor(rng.uniform(0.5, 2, (5,)), requires_grad=True),), lambda a: (T.log(a) * T.exp(a * 0.3) + a**1.5).sum()),
    "sigmoid_silu_softplus": lambda rng: ((param(rng, 6),), lambda a: (T.sigmoid(a) * silu(a) + T.softplus(a * 2.0)).sum()),
    "softmax": lambda rng: ((param(rng, 3, 5), Tensor(rng.standard_normal((3, 5)))), lambda a, w: (softmax(a, axis=1) * w).sum()),
    "matmul_batched": lambda rng: ((param(rng, 2, 3, 4), param(rng, 4, 5)), lambda a, b: (matmul(a, b) ** 2).mean()),
    "transpose_getitem": lambda rng: ((param(rng, 3, 4, 2),), lambda a: (a.transpose(2, 0, 1)[1, :, 1:3] ** 2).sum()),
    "fancy_index": lambda rng: ((param(rng, 5, 3),), lambda a: (a[np.array([0, 2, 2, 4])] ** 2).sum()),
    "concat_stack": lambda rng: ((param(rng, 2, 3), param(rng, 2, 2)), lambda a, b: (stack([concat([a, b], axis=1), concat([b, a], axis=1)], axis=0) ** 3).sum()),
    "pad_mean": lambda rng: ((param(rng, 2, 3),), lambda a: (pad(a, [(1, 0), (2, 1)]) ** 2).mean(axis=1).sum()),
    "conv_stride2": lambda rng: ((param(rng, 2, 5, 6, 3), param(rng, 3, 3, 3, 4), param(rng, 4)), lambda x, w, b: (conv2d(x, w, b, stride=2) ** 2).sum()),
    "conv_1x1": lambda rng: ((param(rng, 2, 3, 4, 3), param(rng, 1, 1, 3, 2)), lambda x, w: (conv2d(x, w) ** 2).sum()),
    "group_norm": lambda rng: ((param(rng, 2, 3, 4, 16), param(rng, 16), param(rng, 16), Tensor(rng.standard_normal((2, 3, 4, 16)))), lambda x, g, b, w: (group_norm(x, 2, g, b) * w).sum()),
    "upsample": lambda rng: ((param(rng, 2, 3, 4, 2), Tensor(rng.standard_normal((2, 5, 8, 2)))), lambda x, w: (upsample_nearest(x, (5, 8)) * w).sum()),
    "bce": lambda rng: ((param(rng, 4, 3), Tensor(rng.integers(0, 2, (4, 3)).astype(float))), lambda z, y: bce_with_logits(z, y)),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients_match_finite_differences(name):
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    inputs, fn = OPS[name](rng)
    out = fn(*inputs)
    trainable = [t for t in inputs if t.requires_grad]
    analytic = grad(out, trainable)
    for t, g in zip(trainable, analytic):
        numeric = numeric_grad(lambda: fn(*inputs), t)
        assert relative_error(g, numeric) < 1e-6, name


def test_layers_gradients():
    rng = np.random.default_rng(7)
    conv = Conv2d(3, 8, rng)
    norm = GroupNorm(8)
    attn = SelfAttention2d(8, rng)
    lin = Linear(8, 2, rng)
    x = Tensor(rng.standard_normal((2, 4, 4, 3)))

    def f():
        h = attn(silu(norm(conv(x))))
        return (lin(h.mean(axis=(1, 2))) ** 2).sum()

    params = conv.parameters() + norm.parameters() + attn.parameters() + lin.parameters()
    for p, g in zip(params, grad(f(), params)):
        assert relative_error(g, numeric_grad(f, p)) < 1e-4


def test_module_state_round_trip():
    rng = np.random.default_rng(0)
    a = Conv2d(2, 4, rng)
    b = Conv2d(2, 4, np.random.default_rng(1))
    b.load_state_dict(a.state_dict())
    for pa, pb in zip(a.parameters(), b.parameters()):
        np.testing.assert_array_equal(pa.data, pb.data)
    with pytest.raises(KeyError):
        b.load_state_dict({"weight": a.weight.data})


# -- Adam --------------------------------------------------------------


def test_adam_zero_gradients_leave_params():
    p = [np.array([1.0, -2.0])]
    new, state = adam_step(p, [np.zeros(2)], AdamState())
    np.testing.assert_array_equal(new[0], p[0])
    assert state.step == 1


def test_adam_constant_gradient_update_approaches_lr():
    # bias-corrected moments of a constant gradient equal g and g^2 exactly,
    # so each update is lr * g / (|g| + eps) -> lr in magnitude
    lr, g = 1e-2, np.array([0.3, -5.0, 1e-3])
    params = [np.zeros(3)]
    state = AdamState(lr=lr)
    for _ in range(200):
        prev = params[0]
        params, state = adam_step(params, [g], state)
    step = np.abs(params[0] - prev)
    np.testing.assert_allclose(step, lr * np.abs(g) / (np.abs(g) + state.eps), rtol=1e-9)
    assert state.step == 200


def test_adam_deterministic_with_cloned_state():
    rng = np.random.default_rng(0)
    params = [rng.standard_normal((3, 2))]
    grads = [rng.standard_normal((3, 2))]
    state = AdamState()
    params, state = adam_step(params, grads, state)
    s1, s2 = state.clone(), state.clone()
    a, _ = adam_step(params, grads, s1)
    b, _ = adam_step(params, grads, s2)
    np.testing.assert_array_equal(a[0], b[0])


def test_adam_nan_gradient_leaves_state():
    state = AdamState()
    params, state = adam_step([np.ones(2)], [np.ones(2)], state)
    snapshot = state.clone()
    with pytest.raises(FloatingPointError):
        adam_step(params, [np.array([np.nan, 0.0])], state)
    assert state.step == snapshot.step
    np.testing.assert_array_equal(state.m[0], snapshot.m[0])


def test_adam_wrapper_minimises_quadratic():
    target = np.array([1.0, -3.0])
    w = Tensor(np.zeros(2), requires_grad=True)
    opt = Adam([w], lr=0.1)
    for _ in range(500):
        opt.zero_grad()
        backward(((w - target) ** 2).sum())
        opt.step()
    np.testing.assert_allclose(w.data, target, atol=1e-3)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_sum_gradient_is_ones(n, m, seed):
    x = Tensor(np.random.default_rng(seed).standard_normal((n, m)), requires_grad=True)
    backward(x.sum())
    np.testing.assert_array_equal(x.grad, np.ones((n, m)))
