"""Symmetric quadrature rules on triangles (barycentric points, weights summing to 1)."""
from __future__ import annotations

from itertools import permutations

import numpy as np

__all__ = ["triangle_rule", "gauss_legendre_01", "RULE_DEGREES"]


def _orbit(a, b, c, w):
    pts = sorted(set(permutations((a, b, c))))
    return [(p, w) for p in pts]


def _s21(a, w):
    return _orbit(a, a, 1.0 - 2.0 * a, w)


_RULES = {
    1: [((1 / 3, 1 / 3, 1 / 3), 1.0)],
    2: _s21(1 / 6, 1 / 3),
    4: _s21(0.445948490915965, 0.223381589678011)
    + _s21(0.091576213509771, 0.109951743655322),
    5: [((1 / 3, 1 / 3, 1 / 3), 0.225)]
    + _s21(0.470142064105115, 0.132394152788506)
    + _s21(0.101286507323456, 0.125939180544827),
    6: _s21(0.249286745170910, 0.116786275726379)
    + _s21(0.063089014491502, 0.050844906370207)
    + _orbit(0.053145049844817, 0.310352451033784, 0.636502499121399, 0.082851075618374),
}

RULE_DEGREES = tuple(sorted(_RULES))


def triangle_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Barycentric points (n_q, 3) and weights (n_q,) exact for polynomials of ``degree``."""
    usable = [d for d in RULE_DEGREES if d >= degree]
    if not usable:
        raise ValueError(f"no triangle rule of degree {degree}; max is {RULE_DEGREES[-1]}")
    rule = _RULES[usable[0]]
    pts = np.array([p for p, _ in rule], dtype=float)
    pts[:, 2] = 1.0 - pts[:, 0] - pts[:, 1]
    w = np.array([w for _, w in rule], dtype=float)
    return pts, w / w.sum()


def gauss_legendre_01(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w
