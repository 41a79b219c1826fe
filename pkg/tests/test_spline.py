import numpy as np
import pytest

from toricflow.spline import GridSpline


def test_reproduces_quintic_exactly():
    # quintic splines reproduce polynomials of degree <= 5
    f = lambda X: X[:, 0] ** 5 - 2 * X[:, 0] ** 2 * X[:, 1] + X[:, 1] ** 3
    s = GridSpline.over_box([0, 0], [1, 1], 0.125, f)
    X = np.array([[0.31, 0.72], [0.05, 0.9]])
    v, g, H, T, Q = s.derivs(X)
    np.testing.assert_allclose(v, f(X), atol=1e-10)
    x, y = X[:, 0], X[:, 1]
    np.testing.assert_allclose(g[:, 0], 5 * x ** 4 - 4 * x * y, atol=1e-8)
    np.testing.assert_allclose(H[:, 1, 1], 6 * y, atol=1e-7)
    np.testing.assert_allclose(H[:, 0, 1], H[:, 1, 0])
    np.testing.assert_allclose(Q[:, 0, 0, 0, 0], 120 * x, atol=1e-5)
    np.testing.assert_allclose(T[:, 0, 0, 1], -4, atol=1e-6)


def test_smooth_function_accuracy():
    s = GridSpline.over_box([0], [1], 1 / 32, lambda X: np.sin(3 * X[:, 0]))
    X = np.linspace(0.1, 0.9, 7)[:, None]
    v, g, H = s.derivs(X, order=2)
    np.testing.assert_allclose(v, np.sin(3 * X[:, 0]), atol=1e-8)
    np.testing.assert_allclose(H[:, 0, 0], -9 * np.sin(3 * X[:, 0]), atol=1e-4)


def test_too_few_nodes():
    with pytest.raises(ValueError):
        GridSpline([0.0], 0.1, np.zeros(3))


def test_values_read_only():
    s = GridSpline.over_box([0], [1], 0.25)
    with pytest.raises(ValueError):
        s.values[0] = 1.0
