import numpy as np
import pytest

from toricflow.mcondition import admissible, estimate_M, v_value
from toricflow.polytope import cube, interval, simplex
from toricflow.potential import potential_from_function, quadratic_potential


def test_v_value_xlogx():
    u = potential_from_function(interval(0.5, 4.0), lambda X: X[:, 0] * np.log(X[:, 0]),
                                h=1 / 64, singular=False)
    for x in (0.7, 1.0, 1.6):
        assert v_value(u, [x], [2 * x]) == pytest.approx(np.log(2), abs=1e-6)


def test_v_value_quadratic():
    u = quadratic_potential(cube(2))
    assert v_value(u, [0.1, 0.2], [0.4, 0.6]) == pytest.approx(0.5, abs=1e-10)


def test_v_positive(cp2, rng):
    for _ in range(20):
        p, q = rng.dirichlet([2, 2, 2], size=2)[:, :2]
        assert v_value(cp2, p, q) > 0


def test_admissible():
    P = interval()
    assert admissible(P, [1 / 3], [2 / 3])
    assert not admissible(P, [0.1], [0.6])
    assert admissible(simplex(2), [0.3, 0.3], [0.3 + 1e-9, 0.3])
    with pytest.raises(ValueError):
        admissible(P, [0.5], [0.5])


def test_estimate_flat_interval():
    u = quadratic_potential(interval())
    assert estimate_M(u).M_hat == pytest.approx(1 / 3, abs=1e-3)


def test_estimate_guillemin_interval(cp1):
    est = estimate_M(cp1)
    assert est.M_hat == pytest.approx(np.log(2), abs=0.01)
    assert est.M_hat <= np.log(2) + 1e-9
    assert np.all(np.diff(est.history) >= 0)


def test_affine_invariance():
    P = simplex(2)
    u = potential_from_function(P, lambda X: 0.05 * X[:, 0] ** 2)
    v = potential_from_function(P, lambda X: 0.05 * X[:, 0] ** 2 + 3 * X[:, 0] - 2 * X[:, 1] + 1)
    assert estimate_M(u, levels=2).M_hat == pytest.approx(estimate_M(v, levels=2).M_hat, abs=1e-12)
