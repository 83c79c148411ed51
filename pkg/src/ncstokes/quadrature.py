"""Quadrature on the reference triangle and on facets.

Triangle rules are stored in barycentric coordinates with weights normalized
to sum to one, so that ``integral over K = |K| * sum(w * g(points))``.
Edge rules live on ``[0, 1]`` with the same normalization.
"""
from dataclasses import dataclass
from math import factorial

import numpy as np

__all__ = [
    "QuadratureRule",
    "UnsupportedDegree",
    "barycentric_monomial_integral",
    "triangle_rule",
    "edge_gauss_rule",
    "GAUSS_LEGENDRE_2",
]


class UnsupportedDegree(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (q, 3) barycentric for triangles, (q,) for edges
    weights: np.ndarray  # (q,)
    exact_degree: int

    @property
    def size(self):
        return len(self.weights)

    @property
    def xhat(self):
        """Reference coordinates ``(lambda_2, lambda_3)`` of triangle points."""
        return self.points[:, 1:]


def barycentric_monomial_integral(alphas, area):
    """Exact integral of ``prod(lambda_i ** alpha_i)`` over a triangle of given area."""
    if area <= 0:
        raise ValueError("area must be positive")
    a = [int(x) for x in alphas]
    if len(a) != 3 or min(a) < 0:
        raise ValueError("alphas must be three non-negative integers")
    num = factorial(2)
    for x in a:
        num *= factorial(x)
    return area * num / factorial(2 + sum(a))


# Symmetric rules (Dunavant), orbit form:
#   ("c", w)           centroid
#   ("s21", a, w)      (a, a, 1-2a) and its 3 permutations
#   ("s111", a, b, w)  (a, b, 1-a-b) and its 6 permutations
_ORBITS = {
    1: (1, [("c", 1.0)]),
    2: (2, [("s21", 1.0 / 6.0, 1.0 / 3.0)]),
    4: (4, [
        ("s21", 0.4459484909159649, 0.22338158967801142),
        ("s21", 0.09157621350977078, 0.10995174365532191),
    ]),
    6: (6, [
        ("s21", 0.24928674517091037, 0.1167862757263794),
        ("s21", 0.06308901449150217, 0.05084490637020674),
        ("s111", 0.053145049844816945, 0.31035245103378434, 0.08285107561837358),
    ]),
    8: (8, [
        ("c", 0.14431560767778717),
        ("s21", 0.45929258829272307, 0.09509163426728459),
        ("s21", 0.17056930775176019, 0.10321737053471813),
        ("s21", 0.05054722831703101, 0.03245849762319814),
        ("s111", 0.008394777409957676, 0.26311282963463845, 0.027230314174435048),
    ]),
    10: (10, [
        ("c", 0.09081799038275269),
        ("s21", 0.4855776333836573, 0.03672595775646692),
        ("s21", 0.10948157548503719, 0.045321059435527875),
        ("s111", 0.14170721941488063, 0.30793983876412095, 0.07275791684541986),
        ("s111", 0.02500353476268675, 0.2466725606399029, 0.028327242531057742),
        ("s111", 0.0095408154002994, 0.06680325101220044, 0.009421666963732861),
    ]),
}


def _expand(orbits):
    pts, wts = [], []
    for orb in orbits:
        kind = orb[0]
        if kind == "c":
            pts.append((1 / 3, 1 / 3, 1 / 3))
            wts.append(orb[1])
        elif kind == "s21":
            a, w = orb[1], orb[2]
            c = 1.0 - 2.0 * a
            pts += [(a, a, c), (a, c, a), (c, a, a)]
            wts += [w] * 3
        else:
            a, b, w = orb[1], orb[2], orb[3]
            c = 1.0 - a - b
            pts += [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
            wts += [w] * 6
    return np.array(pts), np.array(wts)


_TRIANGLE_CACHE = {}


def triangle_rule(degree):
    """Smallest tabulated symmetric rule integrating degree ``degree`` exactly."""
    if degree < 1 or degree > 10:
        raise UnsupportedDegree(f"no triangle rule for degree {degree} (supported: 1..10)")
    key = min(d for d in _ORBITS if d >= degree)
    if key not in _TRIANGLE_CACHE:
        exact, orbits = _ORBITS[key]
        pts, wts = _expand(orbits)
        pts.setflags(write=False)
        wts.setflags(write=False)
        _TRIANGLE_CACHE[key] = QuadratureRule(pts, wts, exact)
    return _TRIANGLE_CACHE[key]


def edge_gauss_rule(num_points):
    """Gauss-Legendre rule on [0, 1], exact up to degree ``2 * num_points - 1``."""
    if num_points < 1 or num_points > 10:
        raise UnsupportedDegree(f"edge rule with {num_points} points not supported")
    x, w = np.polynomial.legendre.leggauss(num_points)
    t = 0.5 * (1.0 + x)
    # leggauss orders nodes ascending; report the + point first for the 2-point case
    t, w = t[::-1].copy(), 0.5 * w[::-1]
    return QuadratureRule(t, w, 2 * num_points - 1)


#: barycentric parameters c+ and c- of the two Gauss-Legendre points of a facet
GAUSS_LEGENDRE_2 = (0.5 * (1 + 1 / np.sqrt(3)), 0.5 * (1 - 1 / np.sqrt(3)))
