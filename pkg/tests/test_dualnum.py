import numpy as np
import pytest

from foilopt import dualnum as dn


def fd_derivative(fun, x, d, h=1e-7):
    return (fun(x + h * d) - fun(x - h * d)) / (2 * h)


class TestArithmetic:
    @pytest.mark.parametrize("expr", [
        lambda a, b: a + b,
        lambda a, b: a - b,
        lambda a, b: a * b,
        lambda a, b: a / b,
        lambda a, b: a * 2.0 + 3.0,
        lambda a, b: 1.0 / a + (-b),
        lambda a, b: a**3 * b**-2,
        lambda a, b: dn.sqrt(a * a + b * b),
        lambda a, b: 2.0 - a,
    ])
    def test_matches_finite_differences(self, expr):
        rng = np.random.default_rng(0)
        x = rng.uniform(0.5, 2.0, (4, 3))
        y = rng.uniform(0.5, 2.0, (4, 3))
        d = rng.standard_normal((4, 3))

        xd = dn.Dual(x, d[..., None])
        yd = dn.Dual(y, np.zeros((4, 3, 1)))
        out = expr(xd, yd)
        fd = fd_derivative(lambda xx: expr(xx, y), x, d)
        np.testing.assert_allclose(out.dot[..., 0], fd, rtol=1e-6, atol=1e-9)

    def test_mixed_plain_operand(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(0.5, 2.0, (5,))
        c = rng.uniform(0.5, 2.0, (5,))
        xd = dn.Dual(x, np.eye(5))
        out = c * xd + x @ np.zeros((5,)) + (xd / c)
        np.testing.assert_allclose(out.val, c * x + x / c)
        np.testing.assert_allclose(out.dot, np.diag(c + 1.0 / c))


class TestHelpers:
    def test_roll(self):
        x = dn.Dual(np.arange(6.0), np.eye(6))
        r = dn.roll(x, 2, axis=0)
        np.testing.assert_array_equal(r.val, np.roll(np.arange(6.0), 2))
        np.testing.assert_array_equal(r.dot, np.roll(np.eye(6), 2, axis=0))

    def test_where_freezes_branch(self):
        x = dn.Dual(np.array([1.0, -1.0]), np.eye(2))
        out = dn.where(x.val > 0, x * 2.0, 0.0 * x)
        np.testing.assert_array_equal(out.val, [2.0, 0.0])
        np.testing.assert_array_equal(out.dot, [[2.0, 0.0], [0.0, 0.0]])

    def test_total(self):
        x = dn.Dual(np.ones((3, 2)), np.ones((3, 2, 4)))
        out = dn.total(x)
        assert out.val == 6.0
        np.testing.assert_array_equal(out.dot, 6.0 * np.ones(4))

    def test_seed(self):
        x = np.zeros((2, 2))
        d = dn.seed(x, [[0], [3], [1, 2]])
        assert d.ndirs == 3
        np.testing.assert_array_equal(d.dot.reshape(4, 3)[:, 2], [0, 1, 1, 0])

    def test_getitem_preserves_directions(self):
        x = dn.Dual(np.arange(12.0).reshape(3, 4), np.random.default_rng(2).standard_normal((3, 4, 5)))
        sub = x[1:, :2]
        assert sub.val.shape == (2, 2)
        assert sub.dot.shape == (2, 2, 5)

    def test_constant(self):
        c = dn.Dual.constant(np.ones((2, 2)), 7)
        assert c.dot.shape == (2, 2, 7)
        assert np.all(c.dot == 0.0)

    def test_stack_last(self):
        a = dn.Dual(np.ones(3), np.ones((3, 2)))
        out = dn.stack_last([a, np.zeros(3)])
        assert out.val.shape == (3, 2)
        assert out.dot.shape == (3, 2, 2)
        np.testing.assert_array_equal(out.dot[:, 1, :], 0.0)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            dn.Dual(np.ones(3), np.ones((4, 2)))
