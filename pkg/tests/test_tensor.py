import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sra import tensor as T
from sra.tensor import NonDeterministicLoss, Parameter, Tensor, apply, backward, check_gradients


def param(rng, *shape, name=None):
    return Parameter(rng.uniform(-1, 1, size=shape), name=name)


def test_basic_op_examples():
    out = T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))
    np.testing.assert_array_equal(out.data, np.full((2, 2), 3.0))
    np.testing.assert_allclose(T.softmax(Tensor(np.zeros(3))).data, [1 / 3] * 3)
    x = np.array([1.0, -2.0, 0.5])
    np.testing.assert_array_equal((Tensor(x) + Tensor(np.zeros(3))).data, x)


def test_backward_square():
    x = Parameter(np.array([1.0, 2.0]))
    grads = backward((x * x).sum())
    np.testing.assert_array_equal(grads[x].data, [2.0, 4.0])


def test_detached_loss_gives_zero_grads():
    x = Parameter(np.array([1.0, 2.0]))
    grads = backward(Tensor(3.0), [x])
    np.testing.assert_array_equal(grads.of(x), [0.0, 0.0])


def test_backward_rejects_non_scalar():
    x = Parameter(np.ones(3))
    with pytest.raises(T.ShapeError):
        backward(x * 2.0)


def test_shape_errors():
    with pytest.raises(T.ShapeError):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(T.ShapeError):
        Tensor(np.ones((2, 3))) + Tensor(np.ones((4, 3)))


def test_domain_errors():
    with pytest.raises(ValueError):
        T.log(Tensor(np.array([1.0, 0.0])))
    with pytest.raises(ValueError):
        T.sqrt(Tensor(np.array([-1.0])))
    with pytest.raises(ValueError):
        Tensor(np.array([0.0])) ** -1.0


def test_unknown_op():
    with pytest.raises(ValueError):
        apply("conv3d", Tensor(1.0))


def test_quadratic_check_is_tight():
    rng = np.random.default_rng(0)
    x = param(rng, 5)
    A = rng.normal(size=(5, 5))
    err = check_gradients(lambda: ((Tensor(A) @ x) * x).sum(), [x])
    assert err < 1e-6


def test_random_loss_rejected():
    rng = np.random.default_rng(0)
    x = param(rng, 3)
    with pytest.raises(NonDeterministicLoss):
        check_gradients(lambda: (x * rng.normal()).sum(), [x])


def test_shared_subexpression_accumulates():
    # x used twice along different paths
    x = Parameter(np.array([0.3, -0.7]))
    y = T.exp(x)
    loss = (y * y + y).sum()
    ex = np.exp(x.data)
    np.testing.assert_allclose(backward(loss)[x].data, 2 * ex * ex + ex)


OPS = {
    "add": lambda a, b: (a + b * 0.5).sum(),
    "mul": lambda a, b: (a * b).sum(),
    "matmul": lambda a, b: (a @ T.transpose(b)).sum(),
    "softmax": lambda a, b: (T.softmax(a) * b).sum(),
    "layernorm": lambda a, b: (T.layernorm(a) * b).sum(),
    "concat": lambda a, b: (T.concat([a, b], axis=0) ** 2.0).sum(),
    "slice": lambda a, b: (T.take(a, np.array([0, 2, 2]), axis=1) * T.take(b, slice(0, 3), axis=1)).sum(),
    "mean": lambda a, b: (a.mean(axis=0) * b.sum(axis=0)).sum(),
    "exp_log": lambda a, b: T.log(T.exp(a) + 1.0).sum() + (b * b).mean(),
    "sqrt_power": lambda a, b: T.sqrt(a * a + 1.0).sum() + ((b * b + 0.5) ** -0.5).sum(),
    "reshape": lambda a, b: (T.reshape(a, (4, 3)) @ T.reshape(b, (3, 4))).sum(),
    "masked_fill": lambda a, b: (T.softmax(T.masked_fill(a, np.triu(np.ones((3, 4)), 2) > 0)) * b).sum(),
    "log_softmax": lambda a, b: (T.log_softmax(a) * b).sum(),
    "broadcast": lambda a, b: (a * T.take(b, 0, axis=0)).sum(),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients(name):
    rng = np.random.default_rng(sorted(OPS).index(name))
    a, b = param(rng, 3, 4), param(rng, 3, 4)
    assert check_gradients(lambda: OPS[name](a, b), [a, b]) < 1e-4


def test_embedding_gradient_accumulates_repeats():
    rng = np.random.default_rng(1)
    table = param(rng, 5, 3)
    ids = np.array([1, 3, 1, 1])
    w = rng.normal(size=(4, 3))
    assert check_gradients(lambda: (T.embedding(table, ids) * w).sum(), [table]) < 1e-4
    g = backward((T.embedding(table, ids) * w).sum())[table].data
    np.testing.assert_allclose(g[1], w[[0, 2, 3]].sum(axis=0))
    np.testing.assert_array_equal(g[[0, 2, 4]], 0.0)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6)),
              elements=st.floats(-30, 30, allow_nan=False)))
def test_softmax_rows_sum_to_one(x):
    s = T.softmax(Tensor(x)).data
    assert (s >= 0).all()
    np.testing.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_layernorm_softmax_chain_random_inputs(seed):
    rng = np.random.default_rng(seed)
    x = param(rng, 2, 5)
    w = rng.uniform(-1, 1, size=(2, 5))
    assert check_gradients(lambda: (T.softmax(T.layernorm(x) * 2.0) * w).sum(), [x]) < 1e-4
