"""Autodiff core: every op against central finite differences, plus the
tape, optimizer, and gradient-check plumbing."""

import numpy as np
import pytest

from bovstream import tensor as T
from bovstream.errors import ConfigError, NumericsError, ShapeError
from bovstream.nn import Adam, AdamState, adam_step, grad_check
from bovstream.tensor import Tensor


def fd_grad(f, arrays, index, step=1e-6):
    """Central-difference gradient of scalar f w.r.t. arrays[index]."""
    base = [a.copy() for a in arrays]
    g = np.zeros_like(base[index])
    flat = base[index].reshape(-1)
    gflat = g.reshape(-1)
    for c in range(flat.size):
        orig = flat[c]
        flat[c] = orig + step
        fp = f(base)
        flat[c] = orig - step
        fm = f(base)
        flat[c] = orig
        gflat[c] = (fp - fm) / (2 * step)
    return g


def rand_shape(rng, max_rank=3, max_extent=6):
    rank = int(rng.integers(1, max_rank + 1))
    return tuple(int(rng.integers(1, max_extent + 1)) for _ in range(rank))


def scalarize(t):
    return T.mean_over_axes(t * t, tuple(range(t.ndim)))


# one entry per op: builds the graph from leaf tensors
OP_CASES = {
    "add": lambda xs: T.add(xs[0], xs[1]),
    "sub": lambda xs: T.sub(xs[0], xs[1]),
    "mul": lambda xs: T.mul(xs[0], xs[1]),
    "matmul": lambda xs: T.matmul(xs[0], xs[1]),
    "softmax_lastdim": lambda xs: T.softmax_lastdim(xs[0]),
    "layer_norm_affine": lambda xs: T.layer_norm_affine(xs[0], xs[1], xs[2]),
    "gelu": lambda xs: T.gelu(xs[0]),
    "mean_over_axes": lambda xs: T.mean_over_axes(xs[0], (0,), keepdims=True),
    "concat_axis": lambda xs: T.concat_axis(list(xs), 0),
    "slice_axis": lambda xs: T.slice_axis(xs[0], 0, 1, xs[0].shape[0]),
    "broadcast_to": lambda xs: T.broadcast_to(xs[0], (4,) + xs[0].shape),
    "sinusoidal_embed": lambda xs: T.sinusoidal_embed(xs[0], 8),
    "reshape": lambda xs: T.reshape(xs[0], (xs[0].size,)),
    "transpose": lambda xs: T.transpose(xs[0], tuple(reversed(range(xs[0].ndim)))),
}


def make_op_inputs(op, rng):
    if op in ("add", "sub", "mul"):
        shape = rand_shape(rng)
        return [rng.standard_normal(shape), rng.standard_normal(shape)]
    if op == "matmul":
        a, b, c = (int(rng.integers(1, 6)) for _ in range(3))
        return [rng.standard_normal((a, b)), rng.standard_normal((b, c))]
    if op == "layer_norm_affine":
        rows, d = int(rng.integers(1, 5)), int(rng.integers(2, 9))
        return [rng.standard_normal((rows, d)), rng.standard_normal(d),
                rng.standard_normal(d)]
    if op == "concat_axis":
        tail = rand_shape(rng, max_rank=2)
        return [rng.standard_normal((int(rng.integers(1, 4)),) + tail) for _ in range(3)]
    if op == "slice_axis":
        return [rng.standard_normal((int(rng.integers(2, 8)),) + rand_shape(rng, 2))]
    if op == "sinusoidal_embed":
        return [rng.uniform(0, 1000, size=int(rng.integers(1, 8)))]
    return [rng.standard_normal(rand_shape(rng))]


@pytest.mark.parametrize("op", sorted(OP_CASES))
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_op_gradients_match_finite_differences(op, seed):
    rng = np.random.default_rng(100 * seed + hash(op) % 1000)
    arrays = make_op_inputs(op, rng)

    def f(arrs):
        leaves = [Tensor(a, requires_grad=True) for a in arrs]
        return scalarize(OP_CASES[op](leaves)).item()

    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    scalarize(OP_CASES[op](leaves)).backward()
    for i, leaf in enumerate(leaves):
        ad = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        fd = fd_grad(f, arrays, i)
        denom = max(np.abs(fd).max(), np.abs(ad).max(), 1e-6)
        assert np.abs(ad - fd).max() / denom < 1e-4, f"{op} input {i}"


def test_add_example():
    out = T.apply("add", [Tensor([1.0, 2.0]), Tensor([3.0, 4.0])])
    np.testing.assert_array_equal(out.data, [4.0, 6.0])


def test_softmax_uniform_on_equal_logits():
    out = T.apply("softmax_lastdim", [Tensor([0.0, 0.0, 0.0])])
    np.testing.assert_allclose(out.data, [1 / 3, 1 / 3, 1 / 3], rtol=1e-6)


def test_matmul_identity():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((3, 5))
    out = T.apply("matmul", [Tensor(np.eye(3)), Tensor(x)])
    np.testing.assert_allclose(out.data, x, rtol=1e-6)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(1)
    out = T.softmax_lastdim(Tensor(rng.standard_normal((6, 4, 9)) * 5))
    np.testing.assert_allclose(out.data.sum(axis=-1), 1.0, atol=1e-6)


def test_layer_norm_pre_affine_moments():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((32, 16)) * 3 + 1
    d = x.shape[-1]
    out = T.layer_norm_affine(Tensor(x), Tensor(np.ones(d)), Tensor(np.zeros(d)))
    assert np.abs(out.data.mean(axis=-1)).max() < 1e-6
    assert np.abs(out.data.var(axis=-1) - 1.0).max() < 1e-5


def test_backward_simple_square():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    loss = T.reshape(T.mean_over_axes(x * x, (0,)) * 3.0, (1,))
    loss.backward()
    np.testing.assert_allclose(x.grad, [2.0, 4.0, 6.0], rtol=1e-6)


def test_backward_constant_loss_leaves_zero_grad():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    c = Tensor([5.0])
    (c * c).backward()
    assert x.grad is None


def test_backward_requires_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ShapeError):
        (x * x).backward()


def test_backward_shared_subexpression_accumulates():
    # u = x*x used twice: loss = mean(u*x + u); d/dx = (3x^2 + 2x) / n
    x = Tensor([0.5, -1.0, 2.0], requires_grad=True)
    u = x * x
    loss = T.mean_over_axes(u * x + u, (0,))
    loss.backward()
    expected = (3 * x.data ** 2 + 2 * x.data) / 3
    np.testing.assert_allclose(x.grad, expected, rtol=1e-6)


def test_repeated_backward_accumulates():
    x = Tensor([1.0, 2.0], requires_grad=True)
    T.mean_over_axes(x * x, (0,)).backward()
    first = x.grad.copy()
    T.mean_over_axes(x * x, (0,)).backward()
    np.testing.assert_allclose(x.grad, 2 * first, rtol=1e-6)


def test_apply_rejects_unknown_op():
    with pytest.raises(ConfigError):
        T.apply("convolve", [Tensor([1.0])])


def test_shape_mismatch_raises():
    with pytest.raises(ShapeError):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_non_finite_output_raises():
    big = Tensor(np.array([3e38], dtype=np.float32))
    with pytest.raises(NumericsError):
        _ = big * big
    with T.finite_checks(False):
        _ = big * big  # guard off: no error


def test_no_grad_suppresses_tape():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with T.no_grad():
        y = x * x
    assert y._grad_fn is None


# ------------------------------------------------------------------ adam

def test_adam_zero_grad_keeps_params():
    p = Tensor([1.0, -2.0], requires_grad=True)
    state = AdamState(lr=0.1)
    adam_step([p], [np.zeros(2)], state)
    np.testing.assert_array_equal(p.data, [1.0, -2.0])
    assert state.step_count == 1


def test_adam_first_step_closed_form():
    # with g=1 the bias-corrected ratio is exactly 1, so the step is -lr
    p = Tensor([0.0], requires_grad=True)
    adam_step([p], [np.ones(1)], AdamState(lr=0.1))
    np.testing.assert_allclose(p.data, [-0.1], atol=1e-7)


def reference_adam_scalar(w, steps, lr=0.1, b1=0.9, b2=0.999, eps=1e-8):
    """Independent scalar Adam on f(w) = w^2, plain python floats."""
    m = v = 0.0
    for t in range(1, steps + 1):
        g = 2.0 * w
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1 ** t)
        vh = v / (1 - b2 ** t)
        w -= lr * mh / (vh ** 0.5 + eps)
    return w


def test_adam_minimizes_quadratic():
    expected = reference_adam_scalar(1.0, 100)
    p = Tensor(np.array([1.0]), requires_grad=True)
    state = AdamState(lr=0.1)
    for _ in range(100):
        adam_step([p], [2.0 * p.data], state)
    assert abs(p.data[0]) < 0.5
    np.testing.assert_allclose(p.data[0], expected, rtol=1e-6)
    assert state.step_count == 100


def test_adam_shape_mismatch():
    p = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ShapeError):
        adam_step([p], [np.zeros(3)], AdamState())


def test_adam_wrapper_matches_functional():
    rng = np.random.default_rng(3)
    data = rng.standard_normal(5)
    p1 = Tensor(data.copy(), requires_grad=True)
    p2 = Tensor(data.copy(), requires_grad=True)
    opt = Adam([p1], lr=0.05)
    state = AdamState(lr=0.05)
    for _ in range(10):
        g = 2 * p1.data
        p1.grad = g.copy()
        opt.step()
        adam_step([p2], [2 * p2.data], state)
    np.testing.assert_allclose(p1.data, p2.data, rtol=1e-7)


# ------------------------------------------------------------- grad_check

def test_grad_check_linear_layer_tight():
    rng = np.random.default_rng(4)
    w = Tensor(rng.standard_normal((6, 3)), requires_grad=True)
    x = Tensor(rng.standard_normal((4, 6)))

    def closure():
        return scalarize(T.matmul(x, w))

    report = grad_check(closure, {"w": w}, tol=1e-7)
    assert report.passed
    assert report.max_rel_err < 1e-8


def test_grad_check_constant_closure_is_exact():
    w = Tensor(np.ones(3), requires_grad=True)
    c = Tensor(np.array([2.0]))

    report = grad_check(lambda: c * c, {"w": w}, tol=1e-4)
    assert report.max_rel_err == 0.0
