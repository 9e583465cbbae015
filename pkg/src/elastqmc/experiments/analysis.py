"""Convergence-rate fitting and Richardson extrapolation."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = ["RateFit", "fit_rate", "richardson_table", "richardson_functional",
           "RichardsonWarning"]


class RichardsonWarning(UserWarning):
    pass


@dataclass(frozen=True)
class RateFit:
    rates: tuple          # pairwise, one fewer than the data
    slope: float          # least-squares slope of log(error) against log(step)


def fit_rate(errors, steps) -> RateFit:
    """Pairwise rates ``log(e[i-1]/e[i]) / |log(step[i]/step[i-1])|`` and the LS slope.

    For halving mesh sizes this is ``log2`` of the error ratio; for doubling
    point counts it is the same quantity with N in place of h.
    """
    e = np.asarray(errors, dtype=float)
    x = np.asarray(steps, dtype=float)
    if e.size != x.size or e.size < 2:
        raise ValueError("need at least two (error, step) pairs of equal length")
    if np.any(~np.isfinite(e)) or np.any(e <= 0):
        raise ValueError("errors must be positive and finite")
    if np.any(x <= 0):
        raise ValueError("steps must be positive")
    rates = np.log(e[:-1] / e[1:]) / np.abs(np.log(x[1:] / x[:-1]))
    slope = float(np.polyfit(np.log(x), np.log(e), 1)[0])
    return RateFit(tuple(float(r) for r in rates), slope)


def richardson_table(values, ratio: float = 2.0, order: int = 2) -> list[list[float]]:
    """Extrapolation table for values on meshes refined by ``ratio``.

    The error is assumed to expand in powers ``h^order, h^(2 order), ...``;
    ``table[i][j]`` eliminates the first ``j`` terms using levels ``i-j..i``.
    """
    T = [[float(v)] for v in values]
    for i in range(1, len(T)):
        for j in range(1, i + 1):
            f = ratio ** (order * j)
            T[i].append((f * T[i][j - 1] - T[i - 1][j - 1]) / (f - 1.0))
    return T


def _column_converges(col, scale, rtol=1e-12) -> bool:
    d = np.diff(col)
    small = np.abs(d) <= rtol * max(scale, 1e-300)
    for a, b, sa, sb in zip(d[:-1], d[1:], small[:-1], small[1:]):
        if sa or sb:
            continue
        if np.sign(a) != np.sign(b) or abs(b) >= abs(a):
            return False
    return True


def richardson_functional(values, ratio: float = 2.0, order: int = 2, warn: bool = True) -> float:
    """Corner of the extrapolation table, falling back to the deepest consistent column.

    Column ``j`` is usable when every column before it converges monotonically
    (successive differences keep their sign and shrink).
    """
    values = list(values)
    if len(values) < 2:
        raise ValueError("Richardson extrapolation needs at least two levels")
    T = richardson_table(values, ratio, order)
    last = len(values) - 1
    scale = max(abs(v) for v in values)
    depth = 0
    while depth < last:
        col = [T[i][depth] for i in range(depth, len(values))]
        if not _column_converges(col, scale):
            break
        depth += 1
    if depth < last and warn:
        warnings.warn(f"non-monotone Richardson table; using column {depth} of {last}",
                      RichardsonWarning, stacklevel=2)
    return T[last][depth]
