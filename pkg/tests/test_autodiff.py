import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import fd_grad, grad_close
from survbnn import autodiff as ad


def scalar(fn):
    return lambda x: float(fn(ad.Var(x)).value)


def test_sum_of_squares():
    x = np.array([1.0, -2.0, 0.5])
    np.testing.assert_allclose(ad.grad_scalar(lambda v: ad.sum(ad.square(v)), x), 2 * x)


def test_constant_objective_has_zero_gradient():
    g = ad.grad_scalar(lambda v: ad.sum(ad.as_var(np.ones(3))), np.arange(3.0))
    np.testing.assert_array_equal(g, 0.0)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_objective_raises():
    with pytest.raises(ad.NonFiniteError):
        ad.value_and_grad(lambda v: ad.sum(ad.log(v)), np.array([-1.0]))


def test_shared_subexpression_accumulates():
    # f = sum(x * x + x) uses x three times
    x = np.array([0.3, -1.2])
    g = ad.grad_scalar(lambda v: ad.sum(v * v + v), x)
    np.testing.assert_allclose(g, 2 * x + 1)


def test_sigmoid_is_stable_for_large_inputs():
    v = ad.sigmoid(ad.Var(np.array([-800.0, 800.0])))
    np.testing.assert_array_equal(v.value, [0.0, 1.0])


vec = arrays(np.float64, st.integers(1, 6), elements=st.floats(-2, 2))


@given(vec)
@settings(max_examples=50, deadline=None)
def test_composite_elementwise_ops(x):
    def f(v):
        return ad.sum(ad.tanh(v) * ad.exp(0.5 * v) + ad.log(ad.sigmoid(v) + 1.0) - ad.square(v))

    assert grad_close(ad.grad_scalar(f, x), fd_grad(scalar(f), x))


@given(vec, st.floats(0.2, 3.0))
@settings(max_examples=50, deadline=None)
def test_normal_logpdf_gradients(x, s):
    # differentiate with respect to mean and scale jointly
    y = np.linspace(-1, 1, x.size)

    def f(v):
        return ad.sum(ad.normal_logpdf(y, v[:-1], ad.exp(v[-1])))

    z = np.append(x, np.log(s))
    assert grad_close(ad.grad_scalar(f, z), fd_grad(scalar(f), z))


@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 5), st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_affine_with_take(n_in, n_out, rows, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(rows, n_in))
    theta = rng.normal(size=n_in * n_out + n_out)

    def f(v):
        W = ad.take(v, slice(0, n_in * n_out), (n_in, n_out))
        b = ad.take(v, slice(n_in * n_out, None))
        return ad.mean(ad.square(ad.affine(X, W, b)))

    assert grad_close(ad.grad_scalar(f, theta), fd_grad(scalar(f), theta))
