"""Spatial quadrature rules for panel-pair integration.

The time variable is always integrated in closed form, so only the two
spatial parameters are quadratured.  Well-separated panel pairs use a
tensor Gauss-Legendre rule.  Pairs whose closures touch see a kernel
with a logarithmic-type singularity at coinciding points; those use
rules graded toward the singular manifold:

* coincident panel: split at the diagonal u = v and integrate the strip
  width w = |v - u| with a graded rule, Gauss along the strip;
* adjacent panels: tensor product of two rules graded toward the shared
  endpoint.

Grading uses the substitution w = xi**GRADING_EXPONENT with a composite
Gauss rule on GRADED_SUBINTERVALS uniform xi-cells, which clusters nodes
polynomially toward w = 0 while keeping the Jacobian smooth.  All rules
are expressed on the reference square [0,1]^2 in panel-local coordinates
(alpha on the test panel, beta on the trial panel).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

GAUSS_N_SEPARATED = 8
GRADING_EXPONENT = 3
GRADED_SUBINTERVALS = 6
GAUSS_N_STRIP = 16
GAUSS_N_CORNER = 8
GAUSS_N_LINE = 8


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def gauss_on_interval(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [a, b]."""
    x, w = gauss_legendre(n)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


def graded_rule(
    n_gauss: int,
    n_sub: int = GRADED_SUBINTERVALS,
    exponent: int = GRADING_EXPONENT,
) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature on [0, 1] graded toward 0.

    Substitutes w = xi**exponent and applies composite Gauss-Legendre on
    n_sub uniform xi-subintervals; weights carry the Jacobian
    exponent * xi**(exponent-1).  Integrates w**p * log(w) factors
    accurately despite the endpoint singularity of the integrand.

    Returns
    -------
    nodes, weights : ndarray
        Nodes in (0, 1), weights summing to 1.
    """
    xg, wg = gauss_legendre(n_gauss)
    nodes, weights = [], []
    for k in range(n_sub):
        a, b = k / n_sub, (k + 1) / n_sub
        xi = 0.5 * (a + b) + 0.5 * (b - a) * xg
        wxi = 0.5 * (b - a) * wg
        nodes.append(xi**exponent)
        weights.append(wxi * exponent * xi ** (exponent - 1))
    return np.concatenate(nodes), np.concatenate(weights)


@dataclass(frozen=True)
class PairRule:
    """Quadrature rule on the reference square for one panel pair.

    alpha, beta are parameter coordinates in [0, 1] on the test and trial
    panel respectively; weight integrates dalpha dbeta (sums to 1 for the
    constant integrand).
    """

    alpha: np.ndarray
    beta: np.ndarray
    weight: np.ndarray

    def __len__(self) -> int:
        return self.alpha.size


def _separated_rule() -> PairRule:
    x, w = gauss_on_interval(0.0, 1.0, GAUSS_N_SEPARATED)
    a, b = np.meshgrid(x, x, indexing="ij")
    wa, wb = np.meshgrid(w, w, indexing="ij")
    return PairRule(a.ravel(), b.ravel(), (wa * wb).ravel())


def _coincident_rule() -> PairRule:
    """Same panel twice: grade the strip width w = beta - alpha.

    The square splits into the triangles beta > alpha and beta < alpha.
    On each, substitute w = beta - alpha (resp. alpha - beta) in (0, 1]
    with the graded rule and integrate the line alpha in [0, 1-w] with
    Gauss; the kernel is singular only as w -> 0.
    """
    wn, ww = graded_rule(GAUSS_N_STRIP)
    xg, wg = gauss_on_interval(0.0, 1.0, GAUSS_N_LINE)
    alpha, beta, weight = [], [], []
    for w, dw in zip(wn, ww):
        line = (1.0 - w) * xg
        wline = (1.0 - w) * wg * dw
        alpha.append(line)
        beta.append(line + w)
        weight.append(wline)
        alpha.append(line + w)
        beta.append(line)
        weight.append(wline)
    return PairRule(
        np.concatenate(alpha), np.concatenate(beta), np.concatenate(weight)
    )


def _adjacent_rule(shared_at_test_right: bool) -> PairRule:
    """Panels sharing one endpoint: tensor of rules graded toward it.

    shared_at_test_right=True covers the pair (i, i+1): the shared point
    sits at alpha = 1 on the test panel and beta = 0 on the trial panel.
    False mirrors both coordinates for the pair (i, i-1).
    """
    gn, gw = graded_rule(GAUSS_N_CORNER)
    if shared_at_test_right:
        an, bn = 1.0 - gn, gn
    else:
        an, bn = gn, 1.0 - gn
    a, b = np.meshgrid(an, bn, indexing="ij")
    wa, wb = np.meshgrid(gw, gw, indexing="ij")
    return PairRule(a.ravel(), b.ravel(), (wa * wb).ravel())


@lru_cache(maxsize=None)
def pair_rules() -> dict[str, PairRule]:
    """Reference-square rules keyed by pair class.

    Keys: "separated", "coincident", "next" (trial panel follows the
    test panel), "prev" (trial panel precedes it).
    """
    return {
        "separated": _separated_rule(),
        "coincident": _coincident_rule(),
        "next": _adjacent_rule(True),
        "prev": _adjacent_rule(False),
    }
