import numpy as np
import pytest

from toricflow.corpus import bump
from toricflow.flow import (FlowConfig, abar_identity, average_A, calabi_energy,
                            energy_decay_rate, initial_state, run, step)
from toricflow.geometry import curvature_fields
from toricflow.polytope import build_grid, gauss_grid, interval, simplex
from toricflow.potential import potential_from_function, zero_potential


def perturbed(P, eps=0.05, h=1 / 32):
    return potential_from_function(P, bump(P, eps), h=h)


def test_abar_identity():
    assert abar_identity(interval()) == pytest.approx(4.0)
    assert abar_identity(simplex(2)) == pytest.approx(12.0)


def test_average_matches_identity():
    for P in (interval(), simplex(2)):
        g = gauss_grid(P, 1 / 32)
        for eps in (0.0, 0.05, 0.1):
            assert average_A(perturbed(P, eps), g) == pytest.approx(abar_identity(P), rel=5e-3)


def test_calabi_energy(cp1, cp2):
    g1, g2 = gauss_grid(interval(), 1 / 32), gauss_grid(simplex(2), 1 / 32)
    assert calabi_energy(cp1, g1, 4.0) == pytest.approx(0.0, abs=1e-18)
    assert calabi_energy(cp2, g2, 12.0) == pytest.approx(0.0, abs=1e-14)
    assert calabi_energy(perturbed(interval()), g1, 4.0) > 1e-4


def test_decay_rate_sign(cp1):
    g = build_grid(interval(), 1 / 32, 1 / 64, offset=0.0)
    assert abs(energy_decay_rate(cp1, g)) < 1e-14
    for eps in (0.05, -0.05, 0.2):
        assert energy_decay_rate(perturbed(interval(), eps), g) <= 1e-8


def test_fixed_point_step(cp1):
    st = initial_state(cp1, FlowConfig(grid_h=1 / 32))
    for dt in (1e-6, 1e-4):
        res = step(st, dt)
        assert res.accepted
        np.testing.assert_allclose(res.state.values, st.values, atol=1e-12)


def test_step_decreases_energy_and_f_where_a_high():
    u = perturbed(interval())
    st = initial_state(u, FlowConfig(grid_h=1 / 32))
    res = step(st, 1e-5)
    assert res.accepted and res.state.energy < st.energy
    X = st.grid.points
    A = curvature_fields(u, X)[4]
    df = res.state.u.smooth.derivs(X, order=0)[0] - u.smooth.derivs(X, order=0)[0]
    high = A > st.abar + 1e-3
    assert high.any() and np.all(df[high] < 0)


def test_gauge_invariance():
    P = interval()
    u = perturbed(P)
    v = potential_from_function(P, lambda X: bump(P)(X) + 0.7 * X[:, 0] - 0.2, h=1 / 32)
    a, b = step(initial_state(u), 1e-5), step(initial_state(v), 1e-5)
    assert a.state.energy == pytest.approx(b.state.energy, rel=1e-9)
    g = gauss_grid(P, 1 / 32)
    np.testing.assert_allclose(curvature_fields(a.state.u, g.points)[4],
                               curvature_fields(b.state.u, g.points)[4], atol=1e-7)


def test_stiffness_ratio():
    # explicit stability limit ~ 1/rho; fourth-order operator gives rho ~ h^-4
    P = interval()
    rhos = []
    for h in (1 / 16, 1 / 32, 1 / 64):
        st = initial_state(perturbed(P, h=h), FlowConfig(grid_h=h))
        rhos.append(st.context.spectral_radius(st.values))
    for a, b in zip(rhos, rhos[1:]):
        assert 8.0 <= b / a <= 32.0


def test_run_terminations(cp1):
    r = run(initial_state(cp1, FlowConfig(grid_h=1 / 32)), FlowConfig(grid_h=1 / 32))
    assert r.reason == "converged" and r.state.t == 0.0
    u = perturbed(interval())
    cfg = FlowConfig(grid_h=1 / 32, t_end=0.0)
    r = run(initial_state(u, cfg), cfg)
    assert r.reason == "time reached" and r.records == []


def test_abar_invariant_along_run():
    cfg = FlowConfig(grid_h=1 / 32, t_end=2e-3)
    st = initial_state(perturbed(interval()), cfg)
    r = run(st, cfg)
    g = gauss_grid(interval(), 1 / 32)
    a0 = average_A(st.u, g)
    assert average_A(r.state.u, g) == pytest.approx(a0, abs=2 * abs(a0 - 4.0) + 1e-6)
    E = [r.initial.calabi_energy] + [x.calabi_energy for x in r.records]
    assert np.all(np.diff(E) <= 0)


def test_config_validation():
    with pytest.raises(ValueError):
        FlowConfig.from_dict({"bogus": 1})
    with pytest.raises(ValueError):
        FlowConfig.from_dict({"scheme": "implicit"})
