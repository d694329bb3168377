import zlib

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dualcvae import tensor as T
from dualcvae.tensor import ComputationGraph, Tensor, finite_diff_check


def param(x):
    return Tensor(np.array(x, dtype=float), requires_grad=True)


# -- matmul -------------------------------------------------------------------
def test_matmul_identity():
    b = np.array([[3.0, 4.0], [5.0, 6.0]])
    np.testing.assert_array_equal(T.matmul(np.eye(2), b).data, b)


def test_matmul_hand_product():
    out = T.matmul(np.array([[1.0, 2], [3, 4]]), np.array([[5.0, 6], [7, 8]]))
    np.testing.assert_array_equal(out.data, [[19, 22], [43, 50]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ValueError, match=r"\(2, 3\).*\(2, 3\)"):
        T.matmul(np.zeros((2, 3)), np.zeros((2, 3)))


def test_matmul_gradients_are_transposed_products(rng):
    a, b = param(rng.normal(size=(3, 4))), param(rng.normal(size=(4, 2)))
    up = rng.normal(size=(3, 2))
    T.backward(T.sum_(T.matmul(a, b) * up))
    np.testing.assert_allclose(a.grad, up @ b.data.T)
    np.testing.assert_allclose(b.grad, a.data.T @ up)


# -- softmax ------------------------------------------------------------------
def test_softmax_uniform():
    np.testing.assert_allclose(T.softmax_lastdim(np.zeros(3)).data, np.full(3, 1 / 3), atol=1e-15)


def test_softmax_matches_high_precision_values():
    mpmath.mp.dps = 40
    exps = [mpmath.exp(v) for v in (1, 2, 3)]
    oracle = np.array([float(e / sum(exps)) for e in exps])
    out = T.softmax_lastdim(np.array([1.0, 2.0, 3.0])).data
    np.testing.assert_allclose(out, oracle, rtol=0, atol=1e-15)
    np.testing.assert_allclose(out, [0.09003057, 0.24472847, 0.66524096], atol=5e-9)


@given(arrays(float, st.integers(1, 6), elements=st.floats(-50, 50)), st.floats(-100, 100))
def test_softmax_shift_invariant_and_normalised(x, c):
    p = T.softmax_lastdim(x).data
    assert abs(p.sum() - 1.0) < 1e-9 and np.all(p >= 0)
    np.testing.assert_allclose(T.softmax_lastdim(x + c).data, p, atol=1e-12)


def test_softmax_large_logits_stay_finite():
    p = T.softmax_lastdim(np.array([[1000.0, 0.0, -1000.0]])).data
    assert np.all(np.isfinite(p)) and p[0, 0] == 1.0


# -- backward semantics ----------------------------------------------------------
def test_product_rule():
    x, y = param(2.0), param(3.0)
    T.backward(x * y)
    assert x.grad == 3.0 and y.grad == 2.0


def test_unreachable_parameter_has_zero_grad():
    x, unused = param([1.0, 2.0]), param([[5.0, 6.0]])
    T.backward(T.sum_(x * x))
    np.testing.assert_array_equal(unused.grad, np.zeros((1, 2)))


def test_backward_requires_scalar():
    with pytest.raises(ValueError, match="scalar"):
        T.backward(param([1.0, 2.0]) * 2.0)


def test_backward_twice_doubles_gradients(rng):
    w = param(rng.normal(size=(3, 3)))
    x = rng.normal(size=(2, 3))
    loss = T.sum_(T.tanh(T.matmul(x, w)))
    T.backward(loss)
    once = w.grad.copy()
    T.backward(loss)
    np.testing.assert_allclose(w.grad, 2 * once, rtol=1e-15)


def test_shared_input_accumulates():
    x = param(3.0)
    T.backward(x * x + x)
    assert x.grad == 7.0


def test_graph_order_is_topological():
    a = param(1.0)
    b = T.exp(a)
    c = b * a + T.tanh(b)
    graph = ComputationGraph(c)
    pos = {n._id: k for k, n in enumerate(graph.nodes)}
    for node in graph.nodes:
        for parent in node._parents:
            assert pos[parent._id] < pos[node._id]
    assert list(graph.reverse())[0] is c


def test_no_grad_records_nothing():
    x = param(1.0)
    with T.no_grad():
        y = x * 2.0
    assert not y.requires_grad and y.is_leaf


def test_composite_softmax_tanh_matches_finite_differences(rng):
    w = param(rng.uniform(-1, 1, (4, 3)))
    x = rng.uniform(-1, 1, (5, 4))
    weights = rng.uniform(-1, 1, (5, 3))
    err = finite_diff_check(lambda: T.sum_(T.softmax_lastdim(T.tanh(T.matmul(x, w))) * weights), [w], 1e-5)
    assert err < 1e-4


# -- finite_diff_check itself --------------------------------------------------------
def test_fd_check_linear_is_exact():
    w = param([0.7])
    assert finite_diff_check(lambda: T.sum_(w * 3.0), [w], 1e-5) < 1e-10


def test_fd_check_tanh():
    w = param([0.5])
    assert finite_diff_check(lambda: T.sum_(T.tanh(w)), [w], 1e-5) < 1e-6


def test_fd_check_rejects_nonpositive_step():
    w = param([0.5])
    with pytest.raises(ValueError):
        finite_diff_check(lambda: T.sum_(w), [w], 0.0)


def test_fd_check_detects_wrong_gradient():
    w = param([0.3, -0.2])

    def bad():
        out = T.sum_(w * w)
        out._backward = lambda g: (g * 0.0,)
        return out

    assert finite_diff_check(bad, [w], 1e-5) > 0.1


# -- every primitive against finite differences ----------------------------------------
def _shape(rng, ndim=2):
    return tuple(int(d) for d in rng.integers(1, 9, ndim))


def _unit(rng, shape):
    return rng.uniform(-1, 1, shape)


def _positive(rng, shape):
    # log, sqrt and division need operands bounded away from zero
    return rng.uniform(0.5, 1.5, shape)


PRIMITIVES = {
    "add": lambda r, s: ([_unit(r, s), _unit(r, s)], lambda a, b: a + b),
    "add_broadcast": lambda r, s: ([_unit(r, s), _unit(r, s[-1:])], lambda a, b: a + b),
    "sub": lambda r, s: ([_unit(r, s), _unit(r, s)], lambda a, b: a - b),
    "mul": lambda r, s: ([_unit(r, s), _unit(r, s)], lambda a, b: a * b),
    "div": lambda r, s: ([_unit(r, s), _positive(r, s)], lambda a, b: a / b),
    "neg": lambda r, s: ([_unit(r, s)], lambda a: -a),
    "square": lambda r, s: ([_unit(r, s)], T.square),
    "sqrt": lambda r, s: ([_positive(r, s)], T.sqrt),
    "tanh": lambda r, s: ([_unit(r, s)], T.tanh),
    "sigmoid": lambda r, s: ([_unit(r, s)], T.sigmoid),
    "exp": lambda r, s: ([_unit(r, s)], T.exp),
    "log": lambda r, s: ([_positive(r, s)], T.log),
    "softmax": lambda r, s: ([_unit(r, s)], T.softmax_lastdim),
    "log_softmax": lambda r, s: ([_unit(r, s)], T.log_softmax_lastdim),
    "matmul": lambda r, s: ([_unit(r, s), _unit(r, (s[1], 3))], T.matmul),
    "affine": lambda r, s: ([_unit(r, s), _unit(r, (s[1], 4)), _unit(r, (4,))], T.affine),
    "concat": lambda r, s: ([_unit(r, s), _unit(r, (s[0], 2))], lambda a, b: T.concat([a, b], axis=1)),
    "stack": lambda r, s: ([_unit(r, s), _unit(r, s)], lambda a, b: T.stack([a, b], axis=1)),
    "reshape": lambda r, s: ([_unit(r, s)], lambda a: T.reshape(a, (-1,))),
    "transpose": lambda r, s: ([_unit(r, s)], T.transpose),
    "getitem": lambda r, s: ([_unit(r, s)], lambda a: a[:, :1]),
    "sum_axis": lambda r, s: ([_unit(r, s)], lambda a: T.sum_(a, axis=0)),
    "mean": lambda r, s: ([_unit(r, s)], lambda a: T.mean(a, axis=1, keepdims=True)),
    "cumsum": lambda r, s: ([_unit(r, s)], lambda a: T.cumsum(a, axis=0)),
    "norm": lambda r, s: ([_positive(r, s)], T.norm_lastdim),
    "clamp": lambda r, s: ([_unit(r, s)], lambda a: T.clamp(a, -2.0, 2.0)),
    "gather": lambda r, s: ([_unit(r, s)], lambda a: T.gather(a, np.array([0, s[0] - 1, 0]))),
    "segment_sum": lambda r, s: ([_unit(r, s)], lambda a: T.segment_sum(a, np.arange(s[0]) % 2, 3)),
    "segment_softmax": lambda r, s: ([_unit(r, s)], lambda a: T.segment_softmax(a, np.arange(s[0]) % 2, 2)),
    "dropout": lambda r, s: ([_unit(r, s)], lambda a: T.dropout(a, 0.3, True, np.random.default_rng(3))),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradients(name):
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    worst = 0.0
    for _ in range(20):
        inputs, op = PRIMITIVES[name](rng, _shape(rng))
        params = [param(x) for x in inputs]
        w = rng.uniform(-1, 1, op(*inputs).shape)
        worst = max(worst, finite_diff_check(lambda: T.sum_(op(*params) * w), params, 1e-5))
    assert worst < 1e-4, f"{name}: {worst}"


# -- dropout ------------------------------------------------------------------------
def test_dropout_eval_is_identity(rng):
    x = Tensor(rng.normal(size=(100,)))
    assert T.dropout(x, 0.5, False, rng) is x


def test_dropout_masked_fraction_and_scaling():
    x = Tensor(np.ones(100_000))
    out = T.dropout(x, 0.2, True, np.random.default_rng(0)).data
    assert abs(np.mean(out == 0) - 0.2) < 0.01
    np.testing.assert_allclose(out[out != 0], 1 / 0.8)


def test_norm_subgradient_at_origin_is_zero():
    x = param(np.zeros((1, 2)))
    T.backward(T.sum_(T.norm_lastdim(x)))
    np.testing.assert_array_equal(x.grad, 0.0)


@settings(max_examples=50)
@given(arrays(float, (3, 4), elements=st.floats(-1, 1)), arrays(float, (4, 2), elements=st.floats(-1, 1)))
def test_values_and_grads_finite(a, b):
    pa, pb = param(a), param(b)
    T.backward(T.sum_(T.log_softmax_lastdim(T.sigmoid(T.matmul(pa, pb)))))
    assert np.all(np.isfinite(pa.grad)) and np.all(np.isfinite(pb.grad))
    assert pa.grad.shape == pa.shape
