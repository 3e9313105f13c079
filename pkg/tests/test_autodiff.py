import numpy as np
import pytest

from sdfseg import autodiff as ad
from sdfseg.autodiff import Tensor


def _gradcheck(build, shapes, seed=0, step=1e-6, tol=1e-6):
    """Compare reverse-mode gradients of a scalar graph against central differences."""
    rng = np.random.default_rng(seed)
    arrays = [rng.uniform(0.3, 1.2, s) for s in shapes]

    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = build(*leaves)
    ad.backward(out)
    analytic = [
        t.grad if t.grad is not None else np.zeros_like(t.data) for t in leaves
    ]

    for which, arr in enumerate(arrays):
        fd = np.zeros_like(arr)
        flat = arr.reshape(-1)
        fdflat = fd.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            for sign in (+1, -1):
                flat[i] = orig + sign * step
                vals = [Tensor(a) for a in arrays]
                fdflat[i] += sign * float(build(*vals).data)
            flat[i] = orig
        fd /= 2 * step
        err = np.linalg.norm(analytic[which] - fd) / max(np.linalg.norm(fd), 1e-12)
        assert err < tol, f"input {which}: rel error {err}"


def test_add_mul_broadcast_grads():
    _gradcheck(
        lambda a, b: ad.reduce_sum(ad.mul(ad.add(a, b), a)),
        [(4, 3), (3,)],
    )


def test_matmul_chain_grads():
    _gradcheck(
        lambda a, b, c: ad.reduce_mean(ad.square(ad.matmul(ad.matmul(a, b), c))),
        [(5, 4), (4, 3), (3, 2)],
    )


def test_trig_exp_log_sqrt_grads():
    _gradcheck(
        lambda a: ad.reduce_sum(ad.sin(a) + ad.cos(a) + ad.exp(a) + ad.log(a) + ad.sqrt(a)),
        [(6,)],
    )


def test_div_and_abs_grads():
    _gradcheck(lambda a, b: ad.reduce_sum(ad.absolute(a) / b), [(5,), (5,)])


def test_take_rows_accumulates_repeats():
    a = Tensor(np.arange(6, dtype=np.float64).reshape(3, 2), requires_grad=True)
    out = ad.reduce_sum(ad.take_rows(a, np.array([0, 0, 2])))
    ad.backward(out)
    np.testing.assert_array_equal(a.grad, [[2.0, 2.0], [0.0, 0.0], [1.0, 1.0]])


def test_take_pairs_grad():
    a = Tensor(np.zeros((3, 4)), requires_grad=True)
    out = ad.reduce_sum(ad.take_pairs(a, np.array([0, 1, 1]), np.array([2, 3, 3])))
    ad.backward(out)
    expected = np.zeros((3, 4))
    expected[0, 2] = 1.0
    expected[1, 3] = 2.0
    np.testing.assert_array_equal(a.grad, expected)


def test_concat_and_slice_grads():
    _gradcheck(
        lambda a, b: ad.reduce_sum(ad.square(ad.concat([a, b], axis=0)[1:4])),
        [(3, 2), (3, 2)],
    )


def test_shared_subexpression_accumulates():
    # y = sum(a * a + a): dy/da = 2a + 1
    a = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    ad.backward(ad.reduce_sum(ad.add(ad.mul(a, a), a)))
    np.testing.assert_allclose(a.grad, [3.0, -3.0])


def test_diamond_graph_no_aliasing():
    # both parents of an add receive the same upstream array; accumulation
    # into one must not corrupt the other
    a = Tensor(np.ones(3), requires_grad=True)
    b = Tensor(np.ones(3), requires_grad=True)
    s = ad.add(a, b)
    out = ad.reduce_sum(ad.add(s, a))  # a gets gradient twice
    ad.backward(out)
    np.testing.assert_array_equal(a.grad, [2.0, 2.0, 2.0])
    np.testing.assert_array_equal(b.grad, [1.0, 1.0, 1.0])


def test_constants_get_no_grad():
    a = Tensor(np.ones(3), requires_grad=True)
    c = ad.constant(np.ones(3))
    ad.backward(ad.reduce_sum(ad.mul(a, c)))
    assert c.grad is None
    np.testing.assert_array_equal(a.grad, [1.0, 1.0, 1.0])


def test_backward_rejects_non_scalar():
    a = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError):
        ad.backward(ad.mul(a, 2.0))


def test_relu_grad_mask():
    a = Tensor(np.array([-1.0, 0.0, 2.0]), requires_grad=True)
    ad.backward(ad.reduce_sum(ad.relu(a)))
    np.testing.assert_array_equal(a.grad, [0.0, 0.0, 1.0])


def test_float32_graphs_stay_float32():
    a = Tensor(np.ones((2, 2), dtype=np.float32), requires_grad=True)
    out = ad.reduce_mean(ad.square(ad.sin(ad.mul(a, 2.0))))
    assert out.dtype == np.float32
    ad.backward(out)
    assert a.grad.dtype == np.float32


def test_second_order_through_explicit_chain():
    # d/dw of (df/dx) for f = sin(w x): chain node cos(w x) * w must carry
    # parameter dependence, giving d/dw [w cos(wx)] = cos(wx) - wx sin(wx)
    w = Tensor(np.array([[0.7]]), requires_grad=True)
    x = ad.constant(np.array([[0.3]]))
    z = ad.mul(ad.matmul(x, w), 1.0)
    grad_x = ad.mul(ad.cos(z), w[0, 0])  # explicit df/dx graph
    ad.backward(ad.reduce_sum(grad_x))
    wx = 0.7 * 0.3
    expected = np.cos(wx) - 0.3 * 0.7 * np.sin(wx)
    np.testing.assert_allclose(w.grad, [[expected]], rtol=1e-12)
