import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from progsup.autodiff import Adam, AdamState, Parameter, ShapeError, Tape, Tensor, adam_step, grad_check
from progsup.autodiff import functional as F

TOL = 1e-4


def t64(rng, *shape, scale=1.0):
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True)


def scalarize(out, w):
    """Weighted sum so every output element gets a distinct upstream gradient."""
    return F.sum(F.mul(out, Tensor(w)))


def weights_for(fn, inputs, rng):
    shape = fn(*inputs).shape
    return rng.standard_normal(shape)


# name -> (builder(rng) -> inputs, fn(*inputs) -> tensor)
OPS = {
    "add_broadcast": (lambda r: [t64(r, 3, 4), t64(r, 4)], F.add),
    "sub_broadcast": (lambda r: [t64(r, 2, 1, 3), t64(r, 4, 3)], F.sub),
    "mul": (lambda r: [t64(r, 3, 4), t64(r, 3, 1)], F.mul),
    "div": (lambda r: [t64(r, 3, 4), Tensor(r.uniform(0.5, 2.0, (3, 4)), requires_grad=True)], F.div),
    "neg": (lambda r: [t64(r, 5)], F.neg),
    "power": (lambda r: [Tensor(r.uniform(0.5, 2.0, (4,)), requires_grad=True)], lambda a: F.power(a, 2.5)),
    "exp": (lambda r: [t64(r, 3, 3)], F.exp),
    "log": (lambda r: [Tensor(r.uniform(0.5, 3.0, (4,)), requires_grad=True)], F.log),
    "tanh": (lambda r: [t64(r, 6)], F.tanh),
    "sigmoid": (lambda r: [t64(r, 6, scale=3.0)], F.sigmoid),
    "gelu": (lambda r: [t64(r, 8, scale=2.0)], F.gelu),
    "matmul_batched": (lambda r: [t64(r, 2, 3, 4), t64(r, 4, 5)], F.matmul),
    "linear": (lambda r: [t64(r, 2, 3, 4), t64(r, 4, 5), t64(r, 5)], F.linear),
    "sum_axis": (lambda r: [t64(r, 3, 4, 2)], lambda a: F.sum(a, axis=1)),
    "mean_keepdims": (lambda r: [t64(r, 3, 4)], lambda a: F.mean(a, axis=0, keepdims=True)),
    "reshape": (lambda r: [t64(r, 3, 4)], lambda a: F.reshape(a, (2, 6))),
    "transpose": (lambda r: [t64(r, 2, 3, 4)], lambda a: F.transpose(a, (2, 0, 1))),
    "getitem_slice": (lambda r: [t64(r, 4, 5)], lambda a: a[1:3, ::2]),
    "getitem_fancy": (lambda r: [t64(r, 5, 3)], lambda a: a[np.array([0, 2, 2, 4])]),
    "concat": (lambda r: [t64(r, 2, 3), t64(r, 4, 3)], lambda a, b: F.concat([a, b], axis=0)),
    "stack": (lambda r: [t64(r, 2, 3), t64(r, 2, 3)], lambda a, b: F.stack([a, b], axis=1)),
    "embedding": (lambda r: [t64(r, 6, 4)], lambda t: F.embedding(t, np.array([[0, 3, 3], [5, 1, 0]]))),
    "softmax": (lambda r: [t64(r, 3, 5)], lambda a: F.softmax(a, axis=-1)),
    "softmax_masked": (lambda r: [t64(r, 2, 4)],
                       lambda a: F.softmax(a, mask=np.array([[1, 1, 0, 1], [0, 1, 1, 0]], bool))),
    "log_softmax": (lambda r: [t64(r, 3, 5)], F.log_softmax),
    "layer_norm": (lambda r: [t64(r, 3, 6), t64(r, 6), t64(r, 6)], F.layer_norm),
    "gru_cell": (lambda r: [t64(r, 2, 3), t64(r, 2, 4), t64(r, 3, 12, scale=0.5), t64(r, 4, 12, scale=0.5),
                            t64(r, 12), t64(r, 12)], F.gru_cell),
}

LOSSES = {
    "cross_entropy_masked": (
        lambda r: [t64(r, 2, 3, 5)],
        lambda a: F.cross_entropy(a, np.array([[0, 4, 2], [1, 1, 3]]),
                                  mask=np.array([[1, 1, 0], [1, 0, 1]], bool))),
    "binary_cross_entropy": (
        lambda r: [t64(r, 3, 4, scale=2.0)],
        lambda a: F.binary_cross_entropy(a, np.linspace(0, 1, 12).reshape(3, 4),
                                         mask=np.arange(12).reshape(3, 4) % 5 != 0)),
    "mse": (lambda r: [t64(r, 4, 2)], lambda a: F.mse(a, np.ones((4, 2)))),
}


def check_op(builder, fn, seed):
    rng = np.random.default_rng(seed)
    inputs = builder(rng)
    w = weights_for(fn, inputs, rng)
    return grad_check(lambda *xs: scalarize(fn(*xs), w), inputs)


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients(name):
    builder, fn = OPS[name]
    worst = max(check_op(builder, fn, seed) for seed in range(20))
    assert worst < TOL


@pytest.mark.parametrize("name", sorted(LOSSES))
def test_loss_gradients(name):
    builder, fn = LOSSES[name]
    for seed in range(20):
        inputs = builder(np.random.default_rng(seed))
        assert grad_check(fn, inputs) < TOL


def test_gelu_is_exact_erf_form():
    x = np.linspace(-4, 4, 17)
    from scipy.special import erf
    np.testing.assert_allclose(F.gelu(Tensor(x)).data, 0.5 * x * (1 + erf(x / np.sqrt(2))), rtol=1e-14)


def test_gru_cell_matches_reference():
    rng = np.random.default_rng(3)
    x, h = rng.standard_normal((2, 3)), rng.standard_normal((2, 4))
    wi, wh = rng.standard_normal((3, 12)), rng.standard_normal((4, 12))
    bi, bh = rng.standard_normal(12), rng.standard_normal(12)
    sig = lambda v: 1 / (1 + np.exp(-v))
    gi, gh = x @ wi + bi, h @ wh + bh
    r = sig(gi[:, :4] + gh[:, :4])
    z = sig(gi[:, 4:8] + gh[:, 4:8])
    n = np.tanh(gi[:, 8:] + (r * h) @ wh[:, 8:] + bh[8:])
    want = (1 - z) * h + z * n
    got = F.gru_cell(*(Tensor(a) for a in (x, h, wi, wh, bi, bh))).data
    np.testing.assert_allclose(got, want, rtol=1e-12)


def test_masked_softmax_gives_zero_weight_and_empty_rows():
    out = F.softmax(Tensor(np.array([[1.0, 2.0, 3.0], [1.0, 1.0, 1.0]])),
                    mask=np.array([[True, False, True], [False, False, False]])).data
    assert out[0, 1] == 0.0
    assert out[0].sum() == pytest.approx(1.0)
    assert np.all(out[1] == 0.0)


def test_softmax_stable_for_large_logits():
    out = F.softmax(Tensor(np.array([1000.0, 1001.0, 999.0]))).data
    assert np.all(np.isfinite(out))
    assert out.sum() == pytest.approx(1.0)


def test_shape_errors():
    with pytest.raises(ShapeError):
        F.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))
    with pytest.raises(ShapeError):
        F.linear(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))


def test_cross_entropy_rejects_out_of_range_target():
    with pytest.raises(ValueError):
        F.cross_entropy(Tensor(np.zeros((2, 3))), np.array([0, 3]))


def test_backward_requires_scalar_root():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = x * 2.0
    with pytest.raises(ValueError):
        tape.backward(y)


def test_shared_subexpression_accumulates():
    x = Tensor(np.array([1.5, -2.0]), requires_grad=True)
    with Tape() as tape:
        y = x * x
        loss = F.sum(y + y * 3.0)
    tape.backward(loss)
    np.testing.assert_allclose(x.grad, 8.0 * x.data)


def test_no_tape_means_no_recording():
    x = Tensor(np.ones(2), requires_grad=True)
    y = x * 3.0
    assert not y.requires_grad


def test_adam_bias_correction_first_step():
    p = np.array([1.0, -1.0])
    g = np.array([0.5, -2.0])
    st_ = AdamState.for_params([p])
    adam_step([p], [g], st_, lr=0.1)
    # after one step the corrected moments equal g and g**2
    np.testing.assert_allclose(p, [1.0 - 0.1, -1.0 + 0.1], atol=1e-7)


def test_adam_matches_reference_trajectory():
    rng = np.random.default_rng(0)
    p = rng.standard_normal(4)
    ref = p.copy()
    m = np.zeros(4)
    v = np.zeros(4)
    st_ = AdamState.for_params([p])
    for t in range(1, 6):
        g = rng.standard_normal(4)
        adam_step([p], [g.copy()], st_, lr=0.01)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref -= 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    np.testing.assert_allclose(p, ref, rtol=1e-12)


def test_adam_minimises_quadratic():
    w = Parameter(np.array([3.0, -2.0]))
    opt = Adam([w], lr=0.1)
    for _ in range(300):
        opt.zero_grad()
        with Tape() as tape:
            loss = F.sum(w * w)
        tape.backward(loss)
        opt.step()
    assert np.abs(w.data).max() < 1e-2


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 10_000))
def test_broadcast_add_gradient_shapes(n, k, seed):
    rng = np.random.default_rng(seed)
    a = Tensor(rng.standard_normal((n, k)), requires_grad=True)
    b = Tensor(rng.standard_normal((k,)), requires_grad=True)
    with Tape() as tape:
        loss = F.sum(a + b)
    tape.backward(loss)
    assert a.grad.shape == a.shape and b.grad.shape == b.shape
    np.testing.assert_allclose(b.grad, np.full(k, n))
