import numpy as np
import pytest
import scipy.sparse as sp

from kgalign import autograd as ag
from kgalign.autograd import Adam, Tensor
from kgalign.train import gradient_check


def _param(rng, shape, positive=False):
    x = rng.uniform(0.5, 2.0, shape) if positive else rng.normal(size=shape)
    return Tensor(x, requires_grad=True)


CASES = {
    "add_broadcast": lambda a, b, c: (a + c).sum(),
    "sub_mul": lambda a, b, c: ((a - b) * a).sum(),
    "div": lambda a, b, c: (a / b).sum(),
    "rdiv": lambda a, b, c: (1.0 / b).sum(),
    "matmul": lambda a, b, c: (a @ b.T).sum(),
    "getitem": lambda a, b, c: (a[1:, :2] * 3.0).sum(),
    "take_rows_repeat": lambda a, b, c: ag.take_rows(a, np.array([0, 2, 0])).sum(),
    "mean_axis": lambda a, b, c: (a.mean(axis=1, keepdims=True) * a).sum(),
    "exp_log": lambda a, b, c: ag.log(ag.exp(a) + b).sum(),
    "sqrt": lambda a, b, c: ag.sqrt(b).sum(),
    "tanh": lambda a, b, c: ag.tanh(a * 2.0).sum(),
    "logsumexp": lambda a, b, c: ag.logsumexp(a * 3.0, axis=1).sum(),
    "log_softmax": lambda a, b, c: (ag.log_softmax(a, axis=0) * b).sum(),
    "concat": lambda a, b, c: (ag.concat([a, b], axis=1) * 2.0).sum(),
    "neg_transpose": lambda a, b, c: (-(a.T)).sum(),
}


@pytest.mark.parametrize("name", sorted(CASES))
def test_ops_match_central_differences(name):
    rng = np.random.default_rng(0)
    a = _param(rng, (3, 4))
    b = _param(rng, (3, 4), positive=True)
    c = _param(rng, (1, 4))
    err = gradient_check(lambda: CASES[name](a, b, c), [a, b, c])
    assert err < 1e-6


def test_spmm_gradient():
    rng = np.random.default_rng(1)
    s = sp.random(5, 4, density=0.5, random_state=1, format="csr")
    x = _param(rng, (4, 3))
    assert gradient_check(lambda: (ag.spmm(s, x) * ag.spmm(s, x)).sum(), [x]) < 1e-6


def test_relu_gradient_away_from_kink():
    x = Tensor(np.array([[-1.0, 0.5, 2.0]]), requires_grad=True)
    ag.relu(x).sum().backward()
    assert np.array_equal(x.grad, [[0.0, 1.0, 1.0]])


def test_shared_node_accumulates():
    x = Tensor(np.array([2.0]), requires_grad=True)
    y = x * x
    (y + y).sum().backward()
    assert x.grad[0] == pytest.approx(8.0)


def test_backward_requires_scalar():
    with pytest.raises(ValueError):
        (Tensor(np.ones(3), requires_grad=True) * 2.0).backward()


def test_logsumexp_is_stable_for_large_inputs():
    out = ag.logsumexp(Tensor(np.array([[1000.0, 1000.0]])), axis=1)
    assert out.data[0] == pytest.approx(1000.0 + np.log(2.0))


def test_adam_first_step_moves_by_lr():
    p = Tensor(np.array([3.0, -2.0]), requires_grad=True)
    opt = Adam([p], lr=0.1)
    (p * p).sum().backward()
    opt.step()
    assert np.allclose(p.data, [2.9, -1.9])


def test_adam_minimizes_quadratic():
    p = Tensor(np.array([3.0, -2.0]), requires_grad=True)
    opt = Adam([p], lr=0.05)
    for _ in range(2000):
        opt.zero_grad()
        ((p - 1.0) * (p - 1.0)).sum().backward()
        opt.step()
    assert np.allclose(p.data, 1.0, atol=1e-3)
