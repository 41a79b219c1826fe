"""Reference potentials: Guillemin potentials of CP1, CP2 and CP1 x CP1 and
small perturbations of each."""
from __future__ import annotations

import numpy as np

from .polytope import DelzantPolytope, cube, facet_values, interval, simplex
from .potential import SymplecticPotential, potential_from_function, zero_potential

PERTURBATION = 0.05


def bump(P: DelzantPolytope, eps: float = PERTURBATION):
    """``eps * (prod_k l_k)^2``, rescaled to equal ``eps / 16`` at the centroid.

    On ``[0, 1]`` this is ``eps x^2 (1 - x)^2``.  Smooth and vanishing to
    second order on the boundary.
    """
    c = np.prod(facet_values(P, P.centroid[None])[0]) ** 2 * 16.0

    def f(X):
        return eps * np.prod(facet_values(P, X), axis=1) ** 2 / c
    return f


def polytopes() -> dict[str, DelzantPolytope]:
    return {"cp1": interval(), "cp2": simplex(2), "cp1xcp1": cube(2)}


def corpus(h: float = 1 / 32, eps: float = PERTURBATION) -> dict[str, SymplecticPotential]:
    """Six potentials keyed ``<name>`` and ``<name>+eps``."""
    out = {}
    for name, P in polytopes().items():
        out[name] = zero_potential(P, h=h)
        out[name + "+eps"] = potential_from_function(P, bump(P, eps), h=h)
    return out
