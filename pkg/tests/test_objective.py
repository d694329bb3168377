import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dualcvae import tensor as T
from dualcvae.latent import GaussianParams
from dualcvae.objective import (LossWeights, categorical_kl, gaussian_kl, reconstruction_loss,
                                total_loss)
from dualcvae.tensor import Tensor


def gp(mu, lv):
    return GaussianParams(Tensor(np.asarray(mu, float)), Tensor(np.asarray(lv, float)))


def test_reconstruction_examples():
    y = np.zeros((1, 1, 2))
    assert float(reconstruction_loss(y, y).data) == 0.0
    assert float(reconstruction_loss(y, np.array([[[3.0, 4.0]]])).data) == 5.0
    pair = np.array([[[3.0, 4.0], [0.0, 0.0]]])
    assert float(reconstruction_loss(np.zeros((1, 2, 2)), pair).data) == 2.5


def test_reconstruction_shape_mismatch():
    with pytest.raises(ValueError, match="shape"):
        reconstruction_loss(np.zeros((1, 2, 2)), np.zeros((1, 3, 2)))


def test_gaussian_kl_examples():
    assert float(gaussian_kl(gp([[1.0]], [[0.0]]), gp([[0.0]], [[0.0]])).data) == 0.5
    q = gp([[0.2, -0.4]], [[0.3, -0.7]])
    assert abs(float(gaussian_kl(q, q).data)) < 1e-12


def _log_normal(x, mu, lv):
    return -0.5 * (np.log(2 * np.pi) + lv + (x - mu) ** 2 / np.exp(lv))


def test_gaussian_kl_matches_monte_carlo():
    rng = np.random.default_rng(11)
    n = 1_000_000
    for _ in range(20):
        mq, mp = rng.normal(size=3), rng.normal(size=3)
        lq, lp = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3)
        x = mq + np.exp(0.5 * lq) * rng.standard_normal((n, 3))
        mc = np.mean(np.sum(_log_normal(x, mq, lq) - _log_normal(x, mp, lp), axis=1))
        exact = float(gaussian_kl(gp([mq], [lq]), gp([mp], [lp])).data)
        assert abs(exact - mc) / exact < 0.02


def test_gaussian_kl_nonnegative_sweep():
    rng = np.random.default_rng(12)
    for _ in range(1000):
        shape = (int(rng.integers(1, 4)), int(rng.integers(1, 5)))
        q = gp(rng.normal(0, 3, shape), rng.uniform(-10, 10, shape))
        p = gp(rng.normal(0, 3, shape), rng.uniform(-10, 10, shape))
        assert float(gaussian_kl(q, p).data) >= -1e-9


def test_gaussian_kl_averages_over_pedestrians():
    q = gp([[1.0], [0.0]], [[0.0], [0.0]])
    p = gp([[0.0], [0.0]], [[0.0], [0.0]])
    assert float(gaussian_kl(q, p).data) == 0.25


def test_categorical_kl_examples():
    assert abs(float(categorical_kl(np.array([[1.0, 0.0]]), np.array([[0.5, 0.5]])).data) - np.log(2)) < 1e-9
    q = np.array([[0.2, 0.3, 0.5]])
    assert abs(float(categorical_kl(q, q).data)) < 1e-12


def test_categorical_kl_nonnegative_sweep():
    rng = np.random.default_rng(13)
    for _ in range(1000):
        k = int(rng.integers(2, 7))
        q = rng.dirichlet(np.full(k, 0.3), size=3)
        p = rng.dirichlet(np.full(k, 0.3), size=3)
        assert float(categorical_kl(q, p).data) >= -1e-9


def test_categorical_kl_handles_zero_probabilities():
    out = categorical_kl(np.array([[0.0, 1.0]]), np.array([[1.0, 0.0]]))
    assert np.isfinite(out.data) and abs(float(out.data) - np.log(1e12)) < 1e-9


def test_categorical_kl_gradient(rng):
    q = Tensor(rng.dirichlet(np.ones(4), size=3), requires_grad=True)
    p = Tensor(rng.dirichlet(np.ones(4), size=3), requires_grad=True)
    assert T.finite_diff_check(lambda: categorical_kl(q, p), [q, p]) < 1e-4


def test_loss_weights_must_be_nonnegative():
    with pytest.raises(ValueError):
        LossWeights(-0.1, 0.0)


def _pieces(rng):
    y = rng.normal(size=(2, 3, 2))
    y_hat = y + rng.normal(size=(2, 3, 2))
    q = gp(rng.normal(size=(2, 2)), rng.normal(size=(2, 2)))
    p = gp(rng.normal(size=(2, 2)), rng.normal(size=(2, 2)))
    qc, pc = rng.dirichlet(np.ones(3), size=2), rng.dirichlet(np.ones(3), size=2)
    return y, y_hat, q, p, qc, pc


@given(st.floats(0, 1), st.floats(0, 1))
def test_total_is_weighted_sum(lz, lc):
    parts = total_loss(*_pieces(np.random.default_rng(0)), LossWeights(lz, lc)).as_floats()
    assert parts["total"] == pytest.approx(parts["reconstruction"] + lz * parts["kl_gaussian"]
                                           + lc * parts["kl_categorical"], abs=1e-12)


def test_total_examples(rng):
    pieces = _pieces(rng)
    zero = total_loss(*pieces, LossWeights(0.0, 0.0)).as_floats()
    assert zero["total"] == zero["reconstruction"]
    default = total_loss(*pieces, LossWeights()).as_floats()
    assert default["total"] == pytest.approx(default["reconstruction"]
                                           + 0.005 * (default["kl_gaussian"] + default["kl_categorical"]), abs=1e-12)
    y, _, q, _, qc, _ = pieces
    assert total_loss(y, y, q, q, qc, qc, LossWeights()).as_floats()["total"] == pytest.approx(0.0, abs=1e-12)


def test_packed_weights_average_window_means():
    # window A has one pedestrian at error 1, window B two at errors 3 and 5
    y = np.zeros((3, 1, 2))
    y_hat = np.array([[[1.0, 0]], [[3.0, 0]], [[5.0, 0]]])
    w = np.array([0.5, 0.25, 0.25])
    assert float(reconstruction_loss(y, y_hat, w).data) == 0.5 * (1 + 4)
