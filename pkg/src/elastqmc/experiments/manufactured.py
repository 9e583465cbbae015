"""Manufactured solution on (0, pi)^2 with body force derived symbolically."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import sympy as sp

from ..fem import VectorField

x1, x2 = sp.symbols("x1 x2", real=True)
DOMAIN = ((0.0, float(np.pi)), (0.0, float(np.pi)))


def _symbolic_solution(Lambda):
    w = sp.sin(x1) * sp.sin(x2) / Lambda
    u1 = (sp.cos(2 * x1) - 1) * sp.sin(2 * x2) + w
    u2 = (1 - sp.cos(2 * x2)) * sp.sin(2 * x1) + w
    return sp.Matrix([u1, u2])


def _symbolic_coefficients(Lambda):
    mu = 1 + x1 + x2
    lam = Lambda * (1 + sp.sin(2 * x1) / 2)
    return mu, lam


def strong_operator(u, mu, lam):
    """-div(mu grad u) - grad((lam + mu) div u) + grad(mu) div u - grad(mu).(grad u)^T."""
    X = (x1, x2)
    grad_u = sp.Matrix(2, 2, lambda i, j: sp.diff(u[i], X[j]))
    div_u = grad_u[0, 0] + grad_u[1, 1]
    gmu = sp.Matrix([sp.diff(mu, v) for v in X])
    out = []
    for i in range(2):
        term = -sum(sp.diff(mu * grad_u[i, j], X[j]) for j in range(2))
        term -= sp.diff((lam + mu) * div_u, X[i])
        term += gmu[i] * div_u
        # (grad mu . (grad u)^T)_i = sum_j dmu/dx_j d u_j / d x_i
        term -= sum(gmu[j] * grad_u[j, i] for j in range(2))
        out.append(term)
    return sp.Matrix(out)


def stress_divergence(u, mu, lam):
    """div sigma(u) with sigma = lam div u I + 2 mu eps(u) (independent residual check)."""
    X = (x1, x2)
    grad_u = sp.Matrix(2, 2, lambda i, j: sp.diff(u[i], X[j]))
    div_u = grad_u[0, 0] + grad_u[1, 1]
    sigma = lam * div_u * sp.eye(2) + mu * (grad_u + grad_u.T)
    return sp.Matrix([sum(sp.diff(sigma[i, j], X[j]) for j in range(2)) for i in range(2)])


@dataclass(frozen=True)
class Manufactured:
    Lambda: float
    exact: VectorField
    force: callable
    functional: float          # exact integral of u2 over the domain
    force_expr: tuple


@lru_cache(maxsize=None)
def manufactured(Lambda: float) -> Manufactured:
    L = sp.nsimplify(Lambda)
    u = _symbolic_solution(L)
    mu, lam = _symbolic_coefficients(L)
    f = sp.simplify(strong_operator(u, mu, lam))
    fn = sp.lambdify((x1, x2), [f[0], f[1]], "numpy")
    un = sp.lambdify((x1, x2), [u[0], u[1]], "numpy")
    gn = sp.lambdify((x1, x2), [[sp.diff(u[i], v) for v in (x1, x2)] for i in range(2)], "numpy")

    def _bcast(fun):
        def wrapped(a, b):
            shape = np.broadcast(a, b).shape
            res = fun(a, b)
            return np.array([[np.broadcast_to(c, shape) for c in row] if isinstance(row, list)
                             else np.broadcast_to(row, shape) for row in res], dtype=float)
        return wrapped

    value = float(sp.integrate(u[1], (x1, 0, sp.pi), (x2, 0, sp.pi)))
    return Manufactured(float(Lambda), VectorField(_bcast(un), _bcast(gn)), _bcast(fn), value,
                        (str(f[0]), str(f[1])))


def strong_residual(Lambda: float, points: np.ndarray) -> float:
    """Relative residual of -div sigma(u) - f at the given points."""
    L = sp.nsimplify(Lambda)
    u = _symbolic_solution(L)
    mu, lam = _symbolic_coefficients(L)
    r = sp.lambdify((x1, x2), list(-stress_divergence(u, mu, lam)), "numpy")
    m = manufactured(Lambda)
    ref = np.array(r(points[:, 0], points[:, 1]), dtype=float)
    got = m.force(points[:, 0], points[:, 1])
    return float(np.abs(ref - got).max() / np.abs(ref).max())
