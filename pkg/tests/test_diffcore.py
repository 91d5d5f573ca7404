import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from lincoln import diffcore as dc


def store_with(**params):
    s = dc.ParamStore()
    for k, v in params.items():
        s.add(k, np.asarray(v, dtype=float))
    return s


def test_primitive_examples():
    assert dc.row_mean(dc.Tensor([[1, 3], [5, 7]])).data.tolist() == [2, 6]
    assert dc.sigmoid(dc.Tensor([0.0])).data[0] == 0.5
    H = sp.csr_matrix(np.array([[1.0], [1.0]]))
    assert dc.spmm(H.T, dc.Tensor([[2.0], [4.0]])).data.tolist() == [[6.0]]


def test_shape_and_finiteness_errors():
    with pytest.raises(dc.ShapeMismatch):
        dc.matmul(dc.Tensor(np.ones((2, 3))), dc.Tensor(np.ones((2, 3))))
    with pytest.raises(dc.ShapeMismatch):
        dc.add(dc.Tensor(np.ones(2)), dc.Tensor(np.ones(3)))
    with pytest.raises(dc.NonFiniteValue):
        dc.log(dc.Tensor([0.0]))
    with np.errstate(over="ignore"), pytest.raises(dc.NonFiniteValue):
        dc.scale(dc.Tensor([1e308]), 10.0)


def test_backward_examples():
    s = store_with(w=[[2.0]])
    out = dc.matmul(s["w"], dc.Tensor([[3.0]]))
    assert dc.backward(out, s)["w"].tolist() == [[3.0]]

    s = store_with(w=[[1.5, -2.0]])
    out = dc.row_mean(dc.sigmoid(dc.scale(s["w"], 0.0)))
    np.testing.assert_array_equal(dc.backward(out, s)["w"], [[0.0, 0.0]])

    s = store_with(W=[[1.0, 2.0], [3.0, 4.0]])
    out = dc.mean_all(dc.reshape_row(dc.matmul(s["W"], dc.Tensor([[1.0], [1.0]]))))
    np.testing.assert_allclose(dc.backward(out, s)["W"], [[0.5, 0.5], [0.5, 0.5]])


def test_backward_rejects_non_scalar():
    s = store_with(w=[1.0, 2.0])
    with pytest.raises(dc.NotScalarOutput):
        dc.backward(s["w"], s)


def test_off_path_parameter_gets_zero_gradient():
    s = store_with(a=[[1.0]], b=[[5.0]])
    g = dc.backward(dc.scale(s["a"], 2.0), s)
    assert g["b"].tolist() == [[0.0]] and g["a"].tolist() == [[2.0]]


def test_grad_check_quadratic():
    s = store_with(w=np.arange(5.0).reshape(1, 5))
    f = lambda: dc.mean_all(dc.reshape_row(dc.row_mean(dc.mul(s["w"], s["w"]))))
    assert dc.grad_check(f, s, 1e-5) <= 1e-8


def test_grad_check_relu_away_from_kink():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(3, 4))
    x = np.where(np.abs(x) < 1e-3, 1e-3 * np.sign(x + 1e-12), x)
    s = store_with(x=x)
    f = lambda: dc.mean_all(dc.reshape_row(dc.row_mean(dc.relu(s["x"]))))
    assert dc.grad_check(f, s, 1e-5) <= 1e-6


def test_grad_check_rejects_bad_epsilon():
    s = store_with(w=[[1.0]])
    with pytest.raises(ValueError):
        dc.grad_check(lambda: dc.row_mean(s["w"]), s, 1e-2)


def scalarize(t):
    """Fixed random projection down to a (1,) scalar."""
    w = np.random.default_rng(99).normal(size=t.shape)
    return dc.row_mean(dc.reshape_row(_flatten(dc.mul(t, dc.Tensor(w)))))


def _flatten(t):
    shape = t.shape
    return dc._node(t.data.reshape(-1), "flatten", (t,), lambda g: (g.reshape(shape),))


def unary_cases():
    H = sp.random(4, 3, density=0.6, random_state=1, format="csr")
    return {
        "sigmoid": dc.sigmoid,
        "tanh": dc.tanh,
        "relu": dc.relu,
        "transpose": dc.transpose,
        "scale": lambda x: dc.scale(x, -1.7),
        "row_mean": dc.row_mean,
        "spmm": lambda x: dc.spmm(H.T, x),
        "log": lambda x: dc.log(dc.clamp_below(dc.mul(x, x), 1e-3)),
        "broadcast_row": lambda x: dc.broadcast_row(dc.spmm(sp.csr_matrix(np.ones((1, 4))), x), 5),
        "reshape": lambda x: dc.reshape_col(dc.row_mean(x)),
    }


def binary_cases():
    return {
        "matmul": lambda a, b: dc.matmul(a, dc.transpose(b)),
        "add": dc.add,
        "sub": dc.sub,
        "mul": dc.mul,
        "concat_rows": lambda a, b: dc.concat_rows([a, b]),
        "concat_cols": lambda a, b: dc.concat_cols([a, b]),
        "row_cosine": dc.row_cosine,
    }


@pytest.mark.parametrize("name", sorted(unary_cases()))
def test_unary_primitive_gradients(name):
    rng = np.random.default_rng(3)
    x = rng.normal(size=(4, 3))
    x = np.where(np.abs(x) < 0.05, 0.05, x)       # keep relu/clamp away from kinks
    s = store_with(x=x)
    op = unary_cases()[name]
    assert dc.grad_check(lambda: scalarize(op(s["x"])), s, 1e-5) <= 1e-6


@pytest.mark.parametrize("name", sorted(binary_cases()))
def test_binary_primitive_gradients(name):
    rng = np.random.default_rng(4)
    s = store_with(a=rng.normal(size=(4, 3)), b=rng.normal(size=(4, 3)))
    op = binary_cases()[name]
    assert dc.grad_check(lambda: scalarize(op(s["a"], s["b"])), s, 1e-5) <= 1e-6


def test_cos_affine_gradient():
    s = store_with(f=[[0.3, 0.05]], p=[[0.2, -1.0]])
    f = lambda: scalarize(dc.cos_affine(s["f"], s["p"], 1.7))
    assert dc.grad_check(f, s, 1e-5) <= 1e-6


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_backward_is_linear(seed):
    rng = np.random.default_rng(seed)
    s = store_with(x=rng.normal(size=(3, 2)))
    f1 = lambda: scalarize(dc.tanh(s["x"]))
    f2 = lambda: scalarize(dc.mul(s["x"], s["x"]))
    both = dc.backward(dc.add(f1(), f2()), s)["x"]
    apart = dc.backward(f1(), s)["x"] + dc.backward(f2(), s)["x"]
    np.testing.assert_allclose(both, apart, rtol=1e-12, atol=1e-12)


def test_forward_is_deterministic():
    rng = np.random.default_rng(5)
    a, b = rng.normal(size=(6, 4)), rng.normal(size=(4, 4))
    r1 = dc.tanh(dc.matmul(dc.Tensor(a), dc.Tensor(b))).data
    r2 = dc.tanh(dc.matmul(dc.Tensor(a), dc.Tensor(b))).data
    assert r1.tobytes() == r2.tobytes()


def test_adam_examples():
    s = store_with(w=[[0.0]])
    dc.adam_step(s, {"w": np.array([[1.0]])}, lr=0.1)
    np.testing.assert_allclose(s["w"].data, [[-0.1]], rtol=0, atol=1e-9)
    assert s.step == 1

    s = store_with(w=[[0.7, -0.2]])
    for _ in range(5):
        dc.adam_step(s, {"w": np.zeros((1, 2))}, lr=0.1)
    assert s["w"].data.tolist() == [[0.7, -0.2]]


def test_adam_only_moves_on_path_parameter():
    s = store_with(a=[[1.0]], b=[[2.0]])
    dc.adam_step(s, dc.backward(dc.scale(s["a"], 3.0), s), lr=0.01)
    assert s["b"].data.tolist() == [[2.0]]
    assert s["a"].data[0, 0] < 1.0


def test_adam_shape_mismatch():
    s = store_with(a=[[1.0]])
    with pytest.raises(dc.ShapeMismatch):
        dc.adam_step(s, {"a": np.zeros(3)})


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    s = store_with(a=rng.normal(size=(2, 3)), b=rng.normal(size=(1, 3)))
    dc.adam_step(s, {k: np.ones_like(v.data) for k, v in s.params.items()})
    path = tmp_path / "x.lnck"
    dc.save_checkpoint(path, s, {"hidden": np.arange(4.0)}, {"run": 0})
    back, extra, meta = dc.load_checkpoint(path)
    assert back.step == 1 and meta == {"run": 0}
    for k in s.names():
        assert back[k].data.tobytes() == s[k].data.tobytes()
        assert back.state[k].m.tobytes() == s.state[k].m.tobytes()
    assert extra["hidden"].tolist() == [0, 1, 2, 3]
