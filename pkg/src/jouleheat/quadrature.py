"""Quadrature rules on the reference tetrahedron and triangle.

Points are barycentric coordinates, weights are normalized to sum to one so
that an integral over a simplex K is ``|K| * sum(w * f(points))``.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (q, d+1) barycentric
    weights: np.ndarray  # (q,), sum 1
    degree: int

    @property
    def size(self) -> int:
        return len(self.weights)


def _perm_class(*coords):
    """All distinct permutations of a barycentric tuple."""
    from itertools import permutations

    return sorted(set(permutations(coords)))


def _tet_rule_2() -> QuadratureRule:
    a, b = 0.5854101966249685, 0.1381966011250105
    pts = np.array(_perm_class(a, b, b, b))
    return QuadratureRule(pts, np.full(4, 0.25), 2)


def _tet_rule_5() -> QuadratureRule:
    # 14-point rule (Walkington), exact for degree 5
    a1, w1 = 0.0927352503108912, 0.01224884051939366
    a2, w2 = 0.3108859192633006, 0.01878132095300264
    b, w3 = 0.4544962958743504, 0.007091003462846911
    pts, wts = [], []
    for a, w in ((a1, w1), (a2, w2)):
        for p in _perm_class(1 - 3 * a, a, a, a):
            pts.append(p)
            wts.append(w)
    for p in _perm_class(b, b, 0.5 - b, 0.5 - b):
        pts.append(p)
        wts.append(w3)
    wts = np.array(wts) * 6.0
    return QuadratureRule(np.array(pts), wts, 5)


def _tri_rule_2() -> QuadratureRule:
    pts = np.array(_perm_class(2 / 3, 1 / 6, 1 / 6))
    return QuadratureRule(pts, np.full(3, 1 / 3), 2)


def _tri_rule_4() -> QuadratureRule:
    a, wa = 0.44594849091596488632, 0.22338158967801146570
    b, wb = 0.09157621350977074346, 0.10995174365532186764
    pts = _perm_class(1 - 2 * a, a, a) + _perm_class(1 - 2 * b, b, b)
    wts = [wa] * 3 + [wb] * 3
    return QuadratureRule(np.array(pts), np.array(wts), 4)


TET_DEG2 = _tet_rule_2()
TET_DEG5 = _tet_rule_5()
TRI_DEG2 = _tri_rule_2()
TRI_DEG4 = _tri_rule_4()


def tet_rule(degree: int) -> QuadratureRule:
    if degree <= 2:
        return TET_DEG2
    if degree <= 5:
        return TET_DEG5
    raise ValueError(f"no tetrahedral rule of degree {degree}")


def tri_rule(degree: int) -> QuadratureRule:
    if degree <= 2:
        return TRI_DEG2
    if degree <= 4:
        return TRI_DEG4
    raise ValueError(f"no triangle rule of degree {degree}")


def barycentric_monomial_mean(exponents) -> float:
    """Exact mean of prod(lambda_i^a_i) over a simplex of dimension len(exponents)-1."""
    d = len(exponents) - 1
    num = np.prod([factorial(a) for a in exponents]) * factorial(d)
    return num / factorial(sum(exponents) + d)
