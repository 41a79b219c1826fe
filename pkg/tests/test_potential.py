import numpy as np
import pytest

from toricflow.polytope import build_grid, interval, simplex
from toricflow.potential import (DomainError, LegendreError, convexity_check, eval_derivs,
                                 guillemin_derivs, legendre_forward, legendre_inverse,
                                 load_checkpoint, normalized, potential_from_function,
                                 quadratic_potential, save_checkpoint, zero_potential)


def test_guillemin_closed_form():
    d = guillemin_derivs(interval(), [0.5])
    assert d.value == pytest.approx(0.5 * np.log(0.5))
    assert d.hessian[0, 0] == pytest.approx(2.0)
    assert guillemin_derivs(simplex(2), [1 / 3, 1 / 3]).value == pytest.approx(
        0.5 * np.log(1 / 3))


def test_gradient_diverges_toward_facet():
    d = guillemin_derivs(interval(), [1e-8])
    assert d.gradient[0] < -9


def test_zero_f_matches_guillemin(cp2):
    x = [0.2, 0.3]
    a, b = eval_derivs(cp2, x), guillemin_derivs(cp2.polytope, x)
    for p, q in zip(a.as_list(), b.as_list()):
        np.testing.assert_allclose(p, q, atol=1e-14)


def test_affine_f_leaves_higher_derivatives():
    P = simplex(2)
    u = potential_from_function(P, lambda X: 3 * X[:, 0] - X[:, 1] + 2)
    a, b = eval_derivs(u, [0.2, 0.3]), guillemin_derivs(P, [0.2, 0.3])
    for p, q in zip(a.as_list()[2:], b.as_list()[2:]):
        np.testing.assert_allclose(p, q, atol=1e-9)


def test_quadratic_perturbation():
    u = potential_from_function(interval(), lambda X: 0.05 * X[:, 0] ** 2)
    assert eval_derivs(u, [0.5]).hessian[0, 0] == pytest.approx(2.1, abs=1e-10)


def test_convexity(cp1):
    g = build_grid(interval(), 0.01, 0.05)
    rep = convexity_check(cp1, g)
    assert rep.passed and rep.min_eigenvalue == pytest.approx(2.0, abs=1e-3)
    bad = potential_from_function(interval(), lambda X: -2 * X[:, 0] ** 2)
    rep = convexity_check(bad, g)
    assert not rep.passed and abs(rep.witness[0] - 0.5) < 0.05
    flat = convexity_check(quadratic_potential(simplex(2)), build_grid(simplex(2), 0.1, 0.05))
    assert flat.min_eigenvalue == pytest.approx(1.0)


def test_legendre_examples(cp1):
    k = legendre_forward(cp1, [0.5])
    assert k.xi[0] == pytest.approx(0.0, abs=1e-14)
    assert k.phi == pytest.approx(-0.5 * np.log(0.5))
    assert legendre_forward(cp1, [0.25]).xi[0] == pytest.approx(0.5 * np.log(1 / 3))
    np.testing.assert_allclose(legendre_inverse(cp1, [0.0]), [0.5], atol=1e-12)


def test_legendre_quadratic_self_dual():
    u = quadratic_potential(simplex(2))
    k = legendre_forward(u, [0.2, 0.3])
    np.testing.assert_allclose(k.xi, [0.2, 0.3], atol=1e-10)
    assert k.phi == pytest.approx(0.5 * 0.13)


def test_legendre_round_trip(cp2, rng):
    for _ in range(20):
        x = rng.dirichlet([2, 2, 2])[:2]
        xi = legendre_forward(cp2, x).xi
        np.testing.assert_allclose(legendre_inverse(cp2, xi), x, atol=1e-8)


def test_legendre_outside_image(cp1):
    u = cp1.with_margin(0.05)
    with pytest.raises(LegendreError):
        legendre_inverse(u, [1e3])


def test_domain_error(cp1):
    with pytest.raises(DomainError):
        eval_derivs(cp1, [1.5])


def test_normalized(cp2):
    u = normalized(potential_from_function(simplex(2), lambda X: X[:, 0] ** 2))
    d = eval_derivs(u, simplex(2).centroid)
    assert abs(d.value) < 1e-12 and np.abs(d.gradient).max() < 1e-10


def test_checkpoint_round_trip(tmp_path):
    u = potential_from_function(simplex(2), lambda X: np.cos(X[:, 0]) * X[:, 1])
    save_checkpoint(u.smooth, tmp_path / "f.ckpt")
    g = load_checkpoint(tmp_path / "f.ckpt")
    np.testing.assert_array_equal(g.values, u.smooth.values)
    assert g.h == u.smooth.h and np.array_equal(g.lo, u.smooth.lo)
