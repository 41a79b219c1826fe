import json

import numpy as np
import pytest

from toricflow.polytope import (PolytopeError, build_grid, cube, delzant_check,
                                euclid_dist_boundary, facet_measures, facet_values, gauss_grid,
                                interval, parse_polytope, simplex, volume)

BAD = {"dimension": 2, "facets": [{"normal": [1, 0], "offset": 0},
                                  {"normal": [0, 1], "offset": 0},
                                  {"normal": [-1, -2], "offset": -2}]}


def test_parse_interval():
    P = parse_polytope({"dimension": 1, "facets": [{"normal": [1], "offset": 0},
                                                   {"normal": [-1], "offset": -1}]})
    assert sorted(P.vertices[:, 0].tolist()) == [0.0, 1.0]


def test_parse_triangle_vertices():
    P = parse_polytope(json.dumps({"dimension": 2, "facets": [
        {"normal": [1, 0], "offset": 0}, {"normal": [0, 1], "offset": 0},
        {"normal": [-1, -1], "offset": -1}]}))
    got = sorted(map(tuple, np.round(P.vertices, 12).tolist()))
    assert got == [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0)]


@pytest.mark.parametrize("spec", ["{not json", {"dimension": 2},
                                  {"dimension": 1, "facets": [{"normal": [1.5], "offset": 0}]},
                                  {"dimension": 0, "facets": []}])
def test_parse_rejects_malformed(spec):
    with pytest.raises(PolytopeError):
        parse_polytope(spec)


def test_delzant_pass():
    assert delzant_check(simplex(2)).passed
    assert delzant_check(cube(2)).passed
    assert all(r["unimodular"] for r in delzant_check(simplex(2)).vertices)


def test_delzant_failure_has_witness():
    rep = delzant_check(parse_polytope(BAD))
    assert not rep.passed
    # vertices (2,0),(0,1),(0,0): normals (0,1),(-1,-2) at (2,0) give det 1;
    # (1,0),(-1,-2) at (0,1) give det -2
    assert rep.witness == [0.0, 1.0]
    dets = {tuple(r["vertex"]): r["determinant"] for r in rep.vertices}
    assert abs(dets[(0.0, 1.0)]) == 2.0


def test_facet_values():
    np.testing.assert_allclose(facet_values(simplex(2), [1 / 3, 1 / 3]), [1 / 3] * 3)
    np.testing.assert_allclose(facet_values(interval(), [0.25]), [0.25, 0.75])
    np.testing.assert_allclose(facet_values(simplex(2), [0.0, 0.0]), [0, 0, 1])


def test_grid_1d_counting():
    g = build_grid(interval(), 0.1, 0.05)
    assert len(g.points) == 10
    np.testing.assert_allclose(g.weights, 0.1)
    np.testing.assert_allclose([w.sum() for w in g.facet_weights], [1.0, 1.0])


def test_grid_area_converges():
    P = simplex(2)
    errs = [abs(gauss_grid(P, h).total_weight - 0.5) for h in (1 / 8, 1 / 16, 1 / 32)]
    assert errs[0] > errs[1] > errs[2] and errs[2] < 1e-3
    assert abs(build_grid(P, 1 / 128, 1e-9).total_weight - 0.5) < 0.01


def test_lattice_facet_measures():
    # primitive normal (-1,-1) makes the hypotenuse measure 1, not sqrt 2
    np.testing.assert_allclose(facet_measures(simplex(2)), [1, 1, 1], atol=1e-12)
    np.testing.assert_allclose(facet_measures(cube(2)), [1, 1, 1, 1], atol=1e-12)
    assert volume(simplex(2)) == pytest.approx(0.5)


def test_euclid_distance():
    assert euclid_dist_boundary(interval(), [0.5]) == pytest.approx(0.5)
    assert euclid_dist_boundary(simplex(2), [1 / 3, 1 / 3]) == pytest.approx(
        (1 / 3) / np.sqrt(2))
    assert euclid_dist_boundary(cube(2), [0.1, 0.5]) == pytest.approx(0.1)


def test_scaled_offsets():
    P = simplex(2).scaled(3.0)
    np.testing.assert_allclose(P.offsets, 3.0 * simplex(2).offsets)
    np.testing.assert_array_equal(P.normals, simplex(2).normals)
