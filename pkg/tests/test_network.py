import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import fd_grad, grad_close
from survbnn import autodiff as ad
from survbnn.network import (NetworkArchitecture, PointFitConfig, Standardizer, forward,
                             forward_batch, forward_tape, load_params, long_design, pack,
                             point_fit, save_params, unpack)
from survbnn.simulation import SimConfig, simulate_case

TINY = NetworkArchitecture((1, 1, 1), ("tanh", "sigmoid"))


def test_zero_params_give_one_half():
    arch = NetworkArchitecture.default(5)
    x = np.random.default_rng(0).normal(size=(7, 5))
    np.testing.assert_array_equal(forward_batch(np.zeros(arch.n_weights), arch, x), 0.5)


def test_tiny_network_hand_value():
    params = pack([[[1.0]], [[2.0]]], [[0.0], [-1.0]])
    out = forward(params, TINY, [0.5])
    assert out == pytest.approx(1 / (1 + np.exp(-(2 * np.tanh(0.5) - 1))), abs=1e-15)
    assert out == pytest.approx(0.4811, abs=1e-4)


def test_default_output_strictly_inside_unit_interval():
    rng = np.random.default_rng(1)
    arch = NetworkArchitecture.default(4)
    for _ in range(20):
        y = forward_batch(rng.normal(0, 3, arch.n_weights), arch, rng.normal(size=(50, 4)))
        assert np.all((y > 0) & (y < 1))


def test_tiny_network_gradient_vs_finite_differences():
    params = np.array([1.0, 0.0, 2.0, -1.0])

    def f(v):
        return ad.sum(forward_tape(v, TINY, [[0.5]]))

    g = ad.grad_scalar(f, params)
    ref = fd_grad(lambda p: forward(p, TINY, [0.5]), params)
    assert grad_close(g, ref)


def test_pack_unpack_round_trip():
    arch = NetworkArchitecture.default(3)
    p = np.arange(arch.n_weights, dtype=float)
    Ws, bs = unpack(p, arch)
    assert [W.shape for W in Ws] == [(3, 8), (8, 4), (4, 1)]
    np.testing.assert_array_equal(pack(Ws, bs), p)
    unpack(np.append(p, 7.0), arch)  # trailing noise slot is tolerated
    with pytest.raises(ValueError):
        unpack(p[:-1], arch)


def test_tape_and_numpy_forward_agree():
    rng = np.random.default_rng(2)
    arch = NetworkArchitecture.default(6)
    p, X = rng.normal(size=arch.n_weights), rng.normal(size=(11, 6))
    np.testing.assert_allclose(forward_tape(ad.Var(p), arch, X).value, forward_batch(p, arch, X),
                               atol=1e-15)


def test_params_file_round_trip(tmp_path):
    arch = NetworkArchitecture.default(2)
    p = np.random.default_rng(3).normal(size=arch.n_weights)
    save_params(tmp_path / "p.json", p, arch)
    p2, arch2 = load_params(tmp_path / "p.json")
    assert arch2 == arch
    np.testing.assert_array_equal(p2, p)
    json.loads((tmp_path / "p.json").read_text())


def test_standardizer():
    X = np.random.default_rng(4).normal(3, 2, size=(100, 3))
    st_ = Standardizer.fit(X)
    Z = st_.transform(X)
    np.testing.assert_allclose(Z.mean(axis=0), 0, atol=1e-12)
    with pytest.raises(ValueError):
        st_.transform(X[:, :2])


def test_long_design_layout():
    Z = np.array([[1.0, 2.0], [3.0, 4.0]])
    X, y = long_design(Z, 3, np.array([[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]]))
    assert X.shape == (6, 5)
    np.testing.assert_array_equal(X[4], [3, 4, 0, 1, 0])
    np.testing.assert_array_equal(y, [0.1, 0.2, 0.3, 0.4, 0.5, 0.6])


def test_constant_targets_are_learned():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(40, 3))
    arch = NetworkArchitecture.default(3)
    res = point_fit(X, np.full(40, 0.5), arch, PointFitConfig(iterations=500), seed=1)
    assert np.abs(forward_batch(res.params, arch, X) - 0.5).max() < 0.01


def test_loss_decreases_over_first_iterations():
    sim = simulate_case(SimConfig.for_case(1, n=200, seed=2))
    data = sim.dataset
    t = np.quantile(sim.t_star, [0.25, 0.5, 0.75])
    Z = Standardizer.fit(data.covariates).transform(data.covariates)
    X, y = long_design(Z, 3, (sim.t_star[:, None] > t[None, :]).astype(float))
    arch = NetworkArchitecture.default(X.shape[1])
    res = point_fit(X, y, arch, PointFitConfig(iterations=100), seed=0)
    assert np.all(np.diff(res.loss_trace) < 0)


def test_zero_iterations_return_initialisation():
    arch = NetworkArchitecture.default(2)
    res = point_fit(np.zeros((3, 2)), np.zeros(3), arch, PointFitConfig(iterations=0), seed=9)
    init = np.random.default_rng(9).normal(0, 0.1, arch.n_weights)
    np.testing.assert_array_equal(res.params, init)
    assert res.loss_trace == []


@given(st.lists(st.integers(1, 5), min_size=1, max_size=3), st.integers(0, 1000))
@settings(max_examples=30, deadline=None)
def test_gradient_any_architecture(hidden, seed):
    rng = np.random.default_rng(seed)
    arch = NetworkArchitecture((3, *hidden, 1), ("tanh",) * len(hidden) + ("sigmoid",))
    X, y = rng.normal(size=(4, 3)), rng.random(4)
    p = rng.normal(size=arch.n_weights)

    def f(v):
        return ad.mean(ad.square(forward_tape(v, arch, X) - y))

    ref = fd_grad(lambda q: float(np.mean((forward_batch(q, arch, X) - y) ** 2)), p)
    assert grad_close(ad.grad_scalar(f, p), ref)
