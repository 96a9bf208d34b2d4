import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lfsafa import nn
from lfsafa.errors import NonFiniteError, ShapeError, TapeError
from lfsafa.nn import ConvParams, GradTape, Tensor


def naive_conv(x, w, b):
    """Six nested loops, zero padding, stride 1."""
    cin, h, wd = x.shape
    cout, _, k, _ = w.shape
    r = k // 2
    out = np.zeros((cout, h, wd))
    for o in range(cout):
        for y in range(h):
            for xx in range(wd):
                acc = b[o]
                for c in range(cin):
                    for ky in range(k):
                        for kx in range(k):
                            yy, xs = y + ky - r, xx + kx - r
                            if 0 <= yy < h and 0 <= xs < wd:
                                acc += w[o, c, ky, kx] * x[c, yy, xs]
                out[o, y, xx] = acc
    return out


def conv(c_in, c_out, k=3, seed=0, dtype=np.float64):
    return nn.init_conv(c_in, c_out, k, np.random.default_rng(seed), dtype=dtype)


# ---------------------------------------------------------------- tensor

def test_tensor_defaults_to_float32():
    t = Tensor([1, 2, 3])
    assert t.dtype == np.float32
    assert t.shape == (3,)
    assert Tensor(np.zeros(2)).dtype == np.float64


def test_check_finite_rejects_nan():
    t = Tensor([1.0, np.nan])
    with pytest.raises(NonFiniteError):
        t.check_finite()


def test_item_requires_scalar():
    with pytest.raises(ShapeError):
        Tensor(np.ones(3)).item()


# ---------------------------------------------------------------- conv2d

def test_identity_kernel():
    x = np.random.default_rng(1).random((1, 5, 6)).astype(np.float32)
    k = np.zeros((1, 1, 3, 3), np.float32)
    k[0, 0, 1, 1] = 1
    y = nn.conv2d(x, ConvParams(Tensor(k), Tensor(np.zeros(1, np.float32))))
    np.testing.assert_array_equal(y.data, x)


def test_ones_kernel_zero_padding():
    y = nn.conv2d(np.ones((1, 3, 3), np.float32),
                  ConvParams(Tensor(np.ones((1, 1, 3, 3), np.float32)), Tensor(np.zeros(1, np.float32))))
    assert y.data[0, 1, 1] == 9.0
    assert y.data[0, 0, 0] == 4.0
    assert y.data[0, 0, 1] == 6.0


@pytest.mark.parametrize("seed", range(3))
def test_conv_matches_naive_loops(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 5, 5))
    w = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    got = nn.conv2d(Tensor(x.astype(np.float32)), ConvParams(Tensor(w.astype(np.float32)), Tensor(b.astype(np.float32))))
    np.testing.assert_allclose(got.data, naive_conv(x, w, b), atol=1e-5)


def test_conv_5x5_and_1x1_match_naive():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((3, 6, 4))
    for k in (1, 5):
        w = rng.standard_normal((2, 3, k, k))
        b = rng.standard_normal(2)
        got = nn.conv2d(Tensor(x), ConvParams(Tensor(w), Tensor(b)))
        np.testing.assert_allclose(got.data, naive_conv(x, w, b), atol=1e-10)


def test_batched_and_grouped_conv():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 4, 2, 5, 5))  # [G, N, C, H, W]
    w = rng.standard_normal((2, 3, 2, 3, 3))
    b = rng.standard_normal((2, 3))
    y = nn.conv2d(Tensor(x), ConvParams(Tensor(w), Tensor(b))).data
    assert y.shape == (2, 4, 3, 5, 5)
    for g in range(2):
        for n in range(4):
            np.testing.assert_allclose(y[g, n], naive_conv(x[g, n], w[g], b[g]), atol=1e-10)


def test_conv_errors_name_dims():
    p = conv(2, 3)
    with pytest.raises(ShapeError, match="expected 2"):
        nn.conv2d(np.zeros((3, 4, 4)), p)
    with pytest.raises(ShapeError):
        ConvParams(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros(1)))


@settings(max_examples=20, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.integers(0, 1000))
def test_conv_linear_without_bias(alpha, beta, seed):
    rng = np.random.default_rng(seed)
    p = ConvParams(Tensor(rng.standard_normal((2, 3, 3, 3)).astype(np.float32)), Tensor(np.zeros(2, np.float32)))
    x, y = rng.standard_normal((2, 3, 6, 6)).astype(np.float32)
    lhs = nn.conv2d(alpha * x + beta * y, p).data
    rhs = alpha * nn.conv2d(x, p).data + beta * nn.conv2d(y, p).data
    np.testing.assert_allclose(lhs, rhs, atol=1e-5)


# ---------------------------------------------------------------- relu, residual, shuffle, concat

def test_relu_values_and_subgradient():
    np.testing.assert_array_equal(nn.relu(np.array([-1.0, 0.0, 2.0])).data, [0, 0, 2])
    x = Tensor(np.array([2.0, -1.0, 0.0]), requires_grad=True)
    with GradTape() as tape:
        loss = nn.sum_(nn.relu(x))
    g = tape.backward(loss)[x]
    np.testing.assert_array_equal(g, [1.0, 0.0, 0.0])


def test_residual_block_zero_weights_is_identity():
    x = np.random.default_rng(0).standard_normal((3, 4, 4))
    z = lambda: ConvParams(Tensor(np.zeros((3, 3, 3, 3))), Tensor(np.zeros(3)))
    np.testing.assert_array_equal(nn.residual_block(x, z(), z()).data, x)


def test_residual_block_zero_input_gives_bias():
    c1 = ConvParams(Tensor(np.zeros((2, 2, 3, 3))), Tensor(np.zeros(2)))
    c2 = ConvParams(Tensor(np.ones((2, 2, 3, 3))), Tensor(np.array([0.5, -2.0])))
    y = nn.residual_block(np.zeros((2, 3, 3)), c1, c2).data
    np.testing.assert_array_equal(y[0], 0.5)
    np.testing.assert_array_equal(y[1], -2.0)


def test_residual_block_is_composition():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((3, 5, 5))
    c1, c2 = conv(3, 3, seed=1), conv(3, 3, seed=2)
    expect = x + nn.conv2d(nn.relu(nn.conv2d(x, c1)), c2).data
    np.testing.assert_allclose(nn.residual_block(x, c1, c2).data, expect, atol=1e-12)
    with pytest.raises(ShapeError):
        nn.residual_block(x, conv(3, 4), conv(4, 3))


def test_pixel_shuffle_mapping():
    y = nn.pixel_shuffle(np.array([1.0, 2.0, 3.0, 4.0]).reshape(4, 1, 1), 2).data
    np.testing.assert_array_equal(y, [[[1, 2], [3, 4]]])
    x = np.random.default_rng(0).random((2, 3, 3))
    np.testing.assert_array_equal(nn.pixel_shuffle(x, 1).data, x)
    with pytest.raises(ShapeError):
        nn.pixel_shuffle(np.zeros((3, 2, 2)), 2)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 4), st.integers(1, 4), st.integers(0, 99))
def test_pixel_shuffle_bijection(c, r, h, w, seed):
    x = np.random.default_rng(seed).random((c * r * r, h, w))
    y = nn.pixel_shuffle(x, r).data
    assert y.shape == (c, r * h, r * w)
    np.testing.assert_array_equal(np.sort(y, axis=None), np.sort(x, axis=None))
    np.testing.assert_array_equal(nn.pixel_unshuffle_array(y, r), x)
    # explicit index formula
    cc, dy, dx, yy, xx = 0, r - 1, 0, h - 1, w - 1
    assert y[cc, r * yy + dy, r * xx + dx] == x[cc * r * r + dy * r + dx, yy, xx]


def test_concat_channels_order_and_grad():
    a = Tensor(np.ones((1, 2, 2)), requires_grad=True)
    b = Tensor(2 * np.ones((1, 2, 2)), requires_grad=True)
    assert nn.concat_channels([a]) is a
    with GradTape() as tape:
        y = nn.concat_channels([a, b])
        loss = nn.sum_(nn.mul(y, np.arange(8.0).reshape(2, 2, 2)))
    assert y.shape == (2, 2, 2)
    np.testing.assert_array_equal(y.data[0], 1)
    g = tape.backward(loss)
    np.testing.assert_array_equal(g[a], np.arange(4.0).reshape(1, 2, 2))
    np.testing.assert_array_equal(g[b], np.arange(4.0, 8.0).reshape(1, 2, 2))
    with pytest.raises(ShapeError):
        nn.concat_channels([np.zeros((1, 2, 2)), np.zeros((1, 3, 2))])


# ---------------------------------------------------------------- tape

def test_backward_identity_conv_gives_ones():
    k = np.zeros((1, 1, 3, 3))
    k[0, 0, 1, 1] = 1
    x = Tensor(np.random.default_rng(0).random((1, 4, 4)), requires_grad=True)
    with GradTape() as tape:
        loss = nn.sum_(nn.conv2d(x, ConvParams(Tensor(k), Tensor(np.zeros(1)))))
    np.testing.assert_array_equal(tape.backward(loss)[x], np.ones((1, 4, 4)))


def test_backward_relu_negative_zero_grad():
    x = Tensor(-np.ones(5), requires_grad=True)
    with GradTape() as tape:
        loss = nn.sum_(nn.relu(x))
    np.testing.assert_array_equal(tape.backward(loss)[x], 0)


def test_backward_errors():
    tape = GradTape()
    with pytest.raises(TapeError):
        tape.backward(Tensor(1.0))
    x = Tensor(np.ones(3), requires_grad=True)
    with GradTape() as tape:
        y = nn.mul(x, 2.0)
    with pytest.raises(ShapeError):
        tape.backward(y)


def test_frozen_param_gets_no_entry():
    p = conv(1, 1)
    p.kernel.requires_grad = p.bias.requires_grad = False
    x = Tensor(np.ones((1, 3, 3)), requires_grad=True)
    with GradTape() as tape:
        loss = nn.sum_(nn.conv2d(x, p))
    g = tape.backward(loss)
    assert x in g and p.kernel not in g and p.bias not in g


def test_reverse_order_and_single_accumulation():
    x = Tensor(np.array([1.5, -2.0]), requires_grad=True)
    with GradTape() as tape:
        y = nn.mul(x, x)
        z = nn.add(y, x)     # x used twice, gradients accumulate
        loss = nn.sum_(z)
    ops = [node.op for node in tape.nodes]
    assert ops == ["mul", "add", "sum"]
    np.testing.assert_allclose(tape.backward(loss)[x], 2 * x.data + 1)


def test_no_tape_records_nothing():
    x = Tensor(np.ones(2), requires_grad=True)
    with GradTape() as tape:
        pass
    nn.mul(x, 3.0)
    assert tape.nodes == []


def test_deterministic_gradients():
    def run():
        rng = np.random.default_rng(5)
        x = Tensor(rng.standard_normal((2, 3, 6, 6)).astype(np.float32), requires_grad=True)
        p = nn.init_conv(3, 4, 3, rng)
        with GradTape() as tape:
            loss = nn.mean(nn.relu(nn.conv2d(x, p)))
        g = tape.backward(loss)
        return g[x].tobytes() + g[p.kernel].tobytes()
    assert run() == run()


# ---------------------------------------------------------------- gradient checker

def test_gradcheck_linear_and_constant():
    rng = np.random.default_rng(0)
    x = Tensor(rng.standard_normal(6), requires_grad=True)
    w = rng.standard_normal(6)
    assert nn.gradient_check(lambda t: nn.sum_(nn.mul(t, w)), x, 1e-3) < 1e-6
    res = nn.gradient_check_detail(lambda t: nn.sum_(nn.mul(t, 0.0)), x, 1e-3)
    assert res.max_rel_error == 0.0 and res.checked == 6


def _smooth_head(y, rng):
    return nn.sum_(nn.mul(y, rng.standard_normal(y.shape)))


OPS = {
    "add": lambda t, c: nn.add(t, c),
    "sub": lambda t, c: nn.sub(c, t),
    "mul": lambda t, c: nn.mul(t, nn.mul(t, c)),
    "neg": lambda t, c: nn.neg(t),
    "relu": lambda t, c: nn.relu(t),
    "mean": lambda t, c: nn.mul(nn.mean(nn.mul(t, c)), t),
    "l1": lambda t, c: nn.mul(nn.l1_loss(t, c), t),
    "reshape": lambda t, c: nn.reshape(t, (-1,)),
    "transpose": lambda t, c: nn.transpose(t, (2, 0, 1)),
    "broadcast": lambda t, c: nn.broadcast_to(nn.getitem(t, (slice(None), slice(0, 1))), t.shape),
    "getitem_fancy": lambda t, c: nn.getitem(t, [0, 1, 0]),
    "concat": lambda t, c: nn.concat([t, nn.mul(t, c)], axis=1),
    "stack": lambda t, c: nn.stack([t, t], axis=0),
    "unbind": lambda t, c: nn.mul(nn.unbind(t, 0)[0], nn.unbind(t, 0)[1]),
    "sum_axis": lambda t, c: nn.sum_(t, axis=1),
    "pixel_shuffle": lambda t, c: nn.pixel_shuffle(nn.concat([t, t], axis=0), 2),
    "conv": lambda t, c: nn.conv2d(t, conv(2, 3, seed=9)),
    "conv_relu": lambda t, c: nn.relu(nn.conv2d(t, conv(2, 3, seed=9))),
    "residual": lambda t, c: nn.residual_block(t, conv(2, 2, seed=1), conv(2, 2, seed=2)),
}


@pytest.mark.parametrize("name", sorted(OPS))
@pytest.mark.parametrize("seed", range(20))
def test_every_op_passes_gradcheck(name, seed):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.standard_normal((2, 4, 4)), requires_grad=True)
    c = rng.standard_normal((2, 4, 4))
    head_rng = np.random.default_rng(100 + seed)
    out_shape = OPS[name](x, c).shape
    w = head_rng.standard_normal(out_shape)
    err = nn.gradient_check(lambda t: nn.sum_(nn.mul(OPS[name](t, c), w)), x, 1e-3)
    assert err < 1e-4


@pytest.mark.parametrize("seed", range(5))
def test_conv_param_gradients(seed):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.standard_normal((2, 3, 5, 5)))
    p = conv(3, 2, seed=seed)
    w = rng.standard_normal((2, 2, 5, 5))
    f = lambda _: nn.sum_(nn.mul(nn.relu(nn.conv2d(x, p)), w))
    assert nn.gradient_check(f, p.kernel, 1e-3) < 1e-4
    assert nn.gradient_check(f, p.bias, 1e-3) < 1e-4


def test_grouped_conv_param_gradients():
    rng = np.random.default_rng(2)
    x = Tensor(rng.standard_normal((3, 2, 2, 4, 4)))
    p = nn.init_conv(2, 2, 3, rng, groups=3, dtype=np.float64)
    w = rng.standard_normal((3, 2, 2, 4, 4))
    f = lambda _: nn.sum_(nn.mul(nn.conv2d(x, p), w))
    assert nn.gradient_check(f, p.kernel) < 1e-4
    assert nn.gradient_check(f, x) < 1e-4


def test_l1_gradient_is_sign_over_n():
    pred = Tensor(np.array([[0.5, -1.0], [2.0, 3.0]]), requires_grad=True)
    target = np.array([[0.0, 0.0], [2.5, 1.0]])
    with GradTape() as tape:
        loss = nn.l1_loss(pred, target)
    assert loss.item() == pytest.approx((0.5 + 1.0 + 0.5 + 2.0) / 4)
    np.testing.assert_array_equal(tape.backward(loss)[pred], np.sign(pred.data - target) / 4)
    assert nn.gradient_check(lambda t: nn.l1_loss(t, target), pred) < 1e-6


def test_l1_trivial_values():
    t = np.random.default_rng(0).random((3, 4))
    assert nn.l1_loss(t, t).item() == 0.0
    assert nn.l1_loss(t + 0.5, t).item() == pytest.approx(0.5, abs=1e-6)
    with pytest.raises(ShapeError):
        nn.l1_loss(np.zeros(3), np.zeros(4))


# ---------------------------------------------------------------- adam

def scalar_adam(g_seq, p0, lr, b1=0.9, b2=0.999, eps=1e-8):
    p, m, v = p0, 0.0, 0.0
    for t, g in enumerate(g_seq, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p = p - lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    return p


def test_adam_zero_grad_leaves_params():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    state = nn.AdamState()
    for _ in range(5):
        nn.adam_step([p], {p: np.zeros(2)}, state, 1e-2)
    np.testing.assert_array_equal(p.data, [1.0, -2.0])
    assert state.step == 5


@pytest.mark.parametrize("g", [1e-6, 0.3, -50.0])
def test_adam_first_step_is_lr(g):
    p = Tensor(np.array([0.0]), requires_grad=True)
    nn.adam_step([p], {p: np.array([g])}, nn.AdamState(), 1e-3)
    assert abs(p.data[0]) == pytest.approx(1e-3, rel=1e-2)
    assert np.sign(p.data[0]) == -np.sign(g)


def test_adam_matches_scalar_trace():
    p = Tensor(np.array([0.7]), requires_grad=True)
    state = nn.AdamState()
    grads = [0.4, 0.4, -0.1]
    for g in grads:
        nn.adam_step([p], {p: np.array([g])}, state, 1e-2)
    assert p.data[0] == pytest.approx(scalar_adam(grads, 0.7, 1e-2), abs=1e-14)
    assert state.m[0].shape == p.shape


def test_adam_rejects_nonfinite_with_name():
    p = Tensor(np.zeros(2), requires_grad=True, name="head.kernel")
    with pytest.raises(NonFiniteError, match="head.kernel"):
        nn.adam_step([p], {p: np.array([1.0, np.inf])}, nn.AdamState(), 1e-3)
    with pytest.raises(ShapeError):
        nn.adam_step([p], {p: np.zeros(3)}, nn.AdamState(), 1e-3)


def test_adam_never_moves_frozen():
    p = Tensor(np.ones(3), requires_grad=False)
    q = Tensor(np.ones(3), requires_grad=True)
    state = nn.AdamState()
    for _ in range(10):
        nn.adam_step([p, q], {p: np.ones(3), q: np.ones(3)}, state, 0.1)
    np.testing.assert_array_equal(p.data, 1.0)
    assert np.all(q.data < 1.0)


def test_init_conv_fan_in_bound():
    p = nn.init_conv(8, 16, 3, np.random.default_rng(0))
    bound = np.sqrt(1.0 / (8 * 9))
    assert np.abs(p.kernel.data).max() <= bound
    assert np.abs(p.kernel.data).max() > 0.9 * bound
