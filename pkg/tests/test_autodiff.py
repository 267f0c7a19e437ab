"""Gradient checks for the reverse-mode tape."""

import numpy as np
import pytest

from shtc import autodiff as ad
from shtc.autodiff import Var


def finite_diff(fn, x0: np.ndarray, h: float = 1e-6) -> np.ndarray:
    grad = np.zeros_like(x0)
    flat = grad.ravel()
    xf = x0.ravel()
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + h
        up = fn(x0)
        xf[i] = orig - h
        dn = fn(x0)
        xf[i] = orig
        flat[i] = (up - dn) / (2 * h)
    return grad


def check(build, x0, rtol=1e-6, atol=1e-9):
    """build(Var) -> scalar Var; compares tape gradient to central differences."""
    x0 = np.asarray(x0, dtype=np.float64)

    def value(arr):
        return float(build(Var(arr)).data)

    v = Var(x0.copy(), requires_grad=True)
    out = build(v)
    out.backward()
    fd = finite_diff(value, x0.copy())
    assert np.allclose(v.grad, fd, rtol=rtol, atol=atol), f"{v.grad} vs {fd}"


class TestBasicOps:
    def test_sum_of_squares(self):
        v = Var(np.array([1.0, 2.0]), requires_grad=True)
        (v * v).sum().backward()
        assert np.allclose(v.grad, [2.0, 4.0])

    def test_add_mul_chain(self):
        check(lambda v: ((v + 2.0) * v).sum(), np.array([0.3, -1.2, 4.0]))

    def test_div(self):
        check(lambda v: (v / Var(np.array([2.0, 4.0]))).sum(), np.array([1.0, 3.0]))
        check(lambda v: (Var(np.array([1.0, 3.0])) / v).sum(), np.array([2.0, 4.0]))

    def test_matmul_both_sides(self):
        a0 = np.arange(6.0).reshape(2, 3)
        b0 = np.arange(12.0).reshape(3, 4) / 7.0
        check(lambda v: (v @ Var(b0)).sum(), a0)
        check(lambda v: (Var(a0) @ v).sum(), b0)

    def test_transpose(self):
        check(lambda v: (v.T @ Var(np.ones((2, 2)))).sum(), np.ones((2, 3)))

    def test_mean(self):
        check(lambda v: (v * v).mean(), np.array([[1.0, 2.0], [3.0, 4.0]]))

    def test_broadcast_row_vector(self):
        x = np.ones((4, 3))
        check(lambda v: (Var(x) * v).sum(), np.array([1.0, 2.0, 3.0]))
        check(lambda v: (Var(x) + v).sum(), np.array([1.0, 2.0, 3.0]))

    def test_exp_log(self):
        check(lambda v: ad.vexp(v).sum(), np.array([0.1, -0.5]))
        check(lambda v: ad.vlog(v).sum(), np.array([0.7, 2.5]))

    def test_softplus(self):
        check(lambda v: ad.softplus(v).sum(), np.array([-20.0, -0.5, 0.0, 0.5, 20.0]))

    def test_abs_away_from_zero(self):
        check(lambda v: ad.vabs(v).sum(), np.array([-1.5, 2.0, 0.25]))

    def test_normal_cdf(self):
        check(lambda v: ad.normal_cdf(v).sum(), np.array([-1.2, 0.0, 0.8]))

    def test_log2(self):
        check(lambda v: ad.log2(v).sum(), np.array([0.3, 5.0]))

    def test_maximum_floor(self):
        check(lambda v: ad.maximum_floor(v, 1.0).sum(), np.array([0.2, 3.0]))
        v = Var(np.array([0.2, 3.0]), requires_grad=True)
        ad.maximum_floor(v, 1.0).sum().backward()
        assert np.allclose(v.grad, [0.0, 1.0])


class TestSoftThreshold:
    def test_gradient_both_args(self):
        x0 = np.array([1.5, -2.0, 0.1, 0.9])
        tau0 = np.array([0.5, 0.5, 0.5, 0.5])
        check(lambda v: ad.soft_threshold(v, Var(tau0)).sum(), x0)

        def value(t):
            return float(ad.soft_threshold(Var(x0), Var(t)).sum().data)

        t = Var(tau0.copy(), requires_grad=True)
        ad.soft_threshold(Var(x0), t).sum().backward()
        fd = finite_diff(value, tau0.copy())
        assert np.allclose(t.grad, fd, rtol=1e-6, atol=1e-9)

    def test_dead_zone_zero_gradient(self):
        x = Var(np.array([0.1]), requires_grad=True)
        tau = Var(np.array([0.5]), requires_grad=True)
        ad.soft_threshold(x, tau).sum().backward()
        assert x.grad is None or np.allclose(x.grad, 0.0)
        assert tau.grad is None or np.allclose(tau.grad, 0.0)


class TestSte:
    def test_forward_rounds_half_away(self):
        x = Var(np.array([0.5, -0.5, 1.2]), requires_grad=True)
        steps = Var(np.array([1.0, 1.0, 1.0]))
        out = ad.ste_quantize(x, steps)
        assert np.allclose(out.data, [1.0, -1.0, 1.0])

    def test_identity_gradient_to_x_none_to_steps(self):
        x = Var(np.array([0.7, -1.3]), requires_grad=True)
        steps = Var(np.array([0.5, 0.5]), requires_grad=True)
        (ad.ste_quantize(x, steps) * 3.0).sum().backward()
        assert np.allclose(x.grad, 3.0)
        assert steps.grad is None


class TestGather:
    def test_take_rows_scatter_add(self):
        x = Var(np.arange(12.0).reshape(4, 3), requires_grad=True)
        idx = np.array([0, 2, 0])
        ad.take_rows(x, idx).sum().backward()
        expected = np.zeros((4, 3))
        expected[0] = 2.0
        expected[2] = 1.0
        assert np.allclose(x.grad, expected)

    def test_slice_cols(self):
        x = Var(np.arange(12.0).reshape(3, 4), requires_grad=True)
        ad.slice_cols(x, 1, 3).sum().backward()
        expected = np.zeros((3, 4))
        expected[:, 1:3] = 1.0
        assert np.allclose(x.grad, expected)


class TestGraph:
    def test_shared_node_accumulates(self):
        x = Var(np.array([2.0]), requires_grad=True)
        y = x * 3.0
        ((y * y) + y).sum().backward()
        # d/dx (9x^2 + 3x) = 18x + 3
        assert np.allclose(x.grad, 39.0)

    def test_constant_subgraph_pruned(self):
        const = Var(np.ones(3))
        x = Var(np.ones(3), requires_grad=True)
        (x * const).sum().backward()
        assert const.grad is None

    def test_backward_needs_scalar(self):
        x = Var(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError):
            (x * 2.0).backward()

    def test_deep_chain(self):
        x = Var(np.array([1.0]), requires_grad=True)
        y = x
        for _ in range(300):
            y = y * 1.01
        y.sum().backward()
        assert np.allclose(x.grad, 1.01**300)
