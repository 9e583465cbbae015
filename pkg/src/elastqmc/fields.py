"""Lamé coefficient fields.

The random perturbations use the sine basis on the unit square

    psi_kl(x) = sin(k pi x1) sin(l pi x2) / (M_alpha (k + l)^(2 alpha)),

enumerated along anti-diagonals by :func:`rho_index`.  Grid values are
synthesised with type-I sine/cosine transforms and interpolated with bicubic
splines built on an odd/even reflection of the grid.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import fft, special
from scipy.interpolate import RectBivariateSpline

__all__ = [
    "FieldBoundError",
    "CoefficientGradientWarning",
    "ScalarField",
    "REGISTRY",
    "FieldSpec",
    "FieldSample",
    "zeta_norm",
    "rho_index",
    "rho_inverse",
    "basis_sup_norm",
    "coefficient_array",
    "eval_field_grid",
    "eval_grad_grid",
    "direct_sum",
    "sample_fields",
    "constant_sample",
    "save_grid",
    "load_grid",
]

#: Poincaré-type constant of the unit square, used for the default c0 threshold.
UNIT_SQUARE_POINCARE = 1.0 / (math.pi * math.sqrt(2.0))


class FieldBoundError(ValueError):
    """A sampled coefficient fell below its declared lower bound."""


class CoefficientGradientWarning(UserWarning):
    pass


# --- deterministic parts -----------------------------------------------------

@dataclass(frozen=True)
class ScalarField:
    """Closed-form scalar field with analytic gradient."""

    name: str
    value: callable
    grad: callable


def _const(c):
    return ScalarField(
        f"const:{c}",
        lambda x1, x2: np.full(np.broadcast(x1, x2).shape, float(c)),
        lambda x1, x2: (np.zeros(np.broadcast(x1, x2).shape),) * 2,
    )


REGISTRY: dict[str, ScalarField] = {
    "one": _const(1.0),
    "affine": ScalarField(
        "1+x1+x2",
        lambda x1, x2: 1.0 + x1 + x2,
        lambda x1, x2: (np.ones(np.broadcast(x1, x2).shape),) * 2,
    ),
    "sin2pi": ScalarField(
        "1+sin(2 pi x1)/2",
        lambda x1, x2: 1.0 + 0.5 * np.sin(2 * np.pi * x1) + 0.0 * x2,
        lambda x1, x2: (np.pi * np.cos(2 * np.pi * x1) + 0.0 * x2,
                        np.zeros(np.broadcast(x1, x2).shape)),
    ),
    "sin2": ScalarField(
        "1+sin(2 x1)/2",
        lambda x1, x2: 1.0 + 0.5 * np.sin(2 * x1) + 0.0 * x2,
        lambda x1, x2: (np.cos(2 * x1) + 0.0 * x2, np.zeros(np.broadcast(x1, x2).shape)),
    ),
}


def _lookup(key) -> ScalarField:
    if isinstance(key, ScalarField):
        return key
    if isinstance(key, (int, float)):
        return _const(key)
    if key.startswith("const:"):
        return _const(float(key.split(":", 1)[1]))
    try:
        return REGISTRY[key]
    except KeyError:
        raise KeyError(f"unknown field {key!r}; known: {sorted(REGISTRY)}") from None


# --- basis bookkeeping -------------------------------------------------------

@lru_cache(maxsize=None)
def zeta_norm(alpha: float) -> float:
    """M_alpha = zeta(2 alpha - 1) - zeta(2 alpha) = sum_j (j - 1) / j^(2 alpha)."""
    if alpha <= 1:
        raise ValueError(f"decay exponent must exceed 1, got {alpha}")
    # zetac = zeta - 1 avoids cancellation against the leading 1 for large alpha
    return float(special.zetac(2 * alpha - 1) - special.zetac(2 * alpha))


def rho_index(k: int, l: int) -> int:
    """Anti-diagonal enumeration of (k, l), k descending within a diagonal."""
    if k < 1 or l < 1:
        raise ValueError("indices must be positive")
    m = k + l
    return (m - 2) * (m - 1) // 2 + l


def rho_inverse(j: int) -> tuple[int, int]:
    if j < 1:
        raise ValueError("index must be positive")
    m = int((1 + math.isqrt(8 * j)) // 2) + 1
    while (m - 2) * (m - 1) // 2 >= j:
        m -= 1
    while m * (m - 1) // 2 < j:
        m += 1
    l = j - (m - 2) * (m - 1) // 2
    return m - l, l


def _kl_table(s: int) -> tuple[np.ndarray, np.ndarray]:
    kl = np.array([rho_inverse(j) for j in range(1, s + 1)], dtype=np.int64).reshape(-1, 2)
    return kl[:, 0], kl[:, 1]


def basis_sup_norm(j: int, alpha: float) -> float:
    k, l = rho_inverse(j)
    return 1.0 / (zeta_norm(alpha) * (k + l) ** (2 * alpha))


# --- field model ---------------------------------------------------------------

@dataclass(frozen=True)
class FieldSpec:
    """Random Lamé model  mu = mu0 + S(y),  lambda = Lambda (lambda_hat0 + S(z)).

    ``s1``/``s2`` are the numbers of active terms in the mu/lambda expansions;
    zero makes the corresponding coefficient deterministic.  By default both
    equal ``n_diag (n_diag + 1) / 2``.
    """

    mu0: str = "one"
    lambda_hat0: str = "one"
    Lambda: float = 1.0
    decay_alpha: float = 2.0
    n_diag: int = 0
    s1: int | None = None
    s2: int | None = None
    mu_bounds: tuple[float, float] | None = None
    lambda_hat_bounds: tuple[float, float] | None = None
    c0_threshold: float | None = None

    def __post_init__(self):
        if self.Lambda < 1:
            raise ValueError("Lambda must be >= 1")
        if self.decay_alpha <= 1:
            raise ValueError("decay_alpha must exceed 1")
        full = self.n_diag * (self.n_diag + 1) // 2
        if self.s1 is None:
            object.__setattr__(self, "s1", full)
        if self.s2 is None:
            object.__setattr__(self, "s2", full)
        for b in (self.mu_bounds, self.lambda_hat_bounds):
            if b is not None and not 0 < b[0] <= b[1]:
                raise ValueError(f"invalid bounds {b}")

    @property
    def mu_min(self) -> float | None:
        return None if self.mu_bounds is None else self.mu_bounds[0]

    def max_frequency(self) -> int:
        s = max(self.s1, self.s2)
        if s == 0:
            return 0
        k, l = _kl_table(s)
        return int(max(k.max(), l.max()))


def coefficient_array(coeffs, alpha: float, M: int) -> np.ndarray:
    """(M-1) x (M-1) array a[k-1, l-1] = coeff_rho(k,l) / (M_alpha (k+l)^(2 alpha))."""
    coeffs = np.asarray(coeffs, dtype=float)
    a = np.zeros((M - 1, M - 1))
    if coeffs.size == 0:
        return a
    k, l = _kl_table(coeffs.size)
    if k.max() >= M or l.max() >= M:
        raise ValueError(f"frequency {max(k.max(), l.max())} does not fit a grid with M={M}")
    a[k - 1, l - 1] = coeffs / (zeta_norm(alpha) * (k + l) ** (2.0 * alpha))
    return a


def eval_field_grid(coeffs, alpha: float, M: int) -> np.ndarray:
    """Values of S = sum a_kl sin(k pi x1) sin(l pi x2) at x = (a/M, b/M), a, b = 0..M.

    Returns the closed (M+1) x (M+1) grid; boundary rows/columns are zero.
    """
    a = coefficient_array(coeffs, alpha, M)
    grid = np.zeros((M + 1, M + 1))
    # scipy's unnormalised DST-I carries a factor 2 per axis
    grid[1:-1, 1:-1] = 0.25 * fft.dstn(a, type=1)
    return grid


def eval_grad_grid(coeffs, alpha: float, M: int) -> tuple[np.ndarray, np.ndarray]:
    """(dS/dx1, dS/dx2) on the closed (M+1) x (M+1) grid."""
    a = coefficient_array(coeffs, alpha, M)
    freq = np.pi * np.arange(1, M)
    out = []
    for axis in (0, 1):
        c = np.zeros((M + 1, M - 1)) if axis == 0 else np.zeros((M - 1, M + 1))
        scaled = a * (freq[:, None] if axis == 0 else freq[None, :])
        if axis == 0:
            c[1:M] = scaled
            g = 0.25 * fft.dst(fft.dct(c, type=1, axis=0), type=1, axis=1)
            grid = np.zeros((M + 1, M + 1))
            grid[:, 1:-1] = g
        else:
            c[:, 1:M] = scaled
            g = 0.25 * fft.dct(fft.dst(c, type=1, axis=0), type=1, axis=1)
            grid = np.zeros((M + 1, M + 1))
            grid[1:-1, :] = g
        out.append(grid)
    return out[0], out[1]


def direct_sum(coeffs, alpha: float, x1, x2, derivative: int | None = None) -> np.ndarray:
    """Naive evaluation of S (or dS/dx_{derivative+1}) at arbitrary points."""
    coeffs = np.asarray(coeffs, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    out = np.zeros(np.broadcast(x1, x2).shape)
    if coeffs.size == 0:
        return out
    k, l = _kl_table(coeffs.size)
    amp = coeffs / (zeta_norm(alpha) * (k + l) ** (2.0 * alpha))
    for kk, ll, c in zip(k, l, amp):
        if derivative is None:
            out += c * np.sin(kk * np.pi * x1) * np.sin(ll * np.pi * x2)
        elif derivative == 0:
            out += c * kk * np.pi * np.cos(kk * np.pi * x1) * np.sin(ll * np.pi * x2)
        else:
            out += c * ll * np.pi * np.sin(kk * np.pi * x1) * np.cos(ll * np.pi * x2)
    return out


_EXTEND = 3


def _reflect(grid: np.ndarray, odd: tuple[bool, bool]) -> np.ndarray:
    for axis, is_odd in enumerate(odd):
        pad = [(0, 0), (0, 0)]
        pad[axis] = (_EXTEND, _EXTEND)
        grid = np.pad(grid, pad, mode="reflect", reflect_type="odd" if is_odd else "even")
    return grid


def _spline(grid: np.ndarray, odd: tuple[bool, bool]) -> RectBivariateSpline:
    M = grid.shape[0] - 1
    x = np.arange(-_EXTEND, M + _EXTEND + 1) / M
    return RectBivariateSpline(x, x, _reflect(grid, odd), kx=3, ky=3, s=0)


# --- samples -----------------------------------------------------------------------

@dataclass(eq=False)
class FieldSample:
    """Coefficients for one parameter point (y, z), evaluable anywhere in the domain."""

    spec: FieldSpec
    y: np.ndarray
    z: np.ndarray
    M: int = 256
    M_grad: int = 512
    _mu_spl: RectBivariateSpline | None = field(default=None, repr=False)
    _dmu_spl: tuple | None = field(default=None, repr=False)
    _lam_spl: RectBivariateSpline | None = field(default=None, repr=False)

    @property
    def mu0(self) -> ScalarField:
        return _lookup(self.spec.mu0)

    @property
    def lambda_hat0(self) -> ScalarField:
        return _lookup(self.spec.lambda_hat0)

    # point evaluation ------------------------------------------------------------
    def mu(self, x1, x2) -> np.ndarray:
        val = self.mu0.value(x1, x2)
        if self._mu_spl is not None:
            val = val + self._mu_spl.ev(x1, x2)
        return val

    def lambda_hat(self, x1, x2) -> np.ndarray:
        val = self.lambda_hat0.value(x1, x2)
        if self._lam_spl is not None:
            val = val + self._lam_spl.ev(x1, x2)
        return val

    def lam(self, x1, x2) -> np.ndarray:
        return self.spec.Lambda * self.lambda_hat(x1, x2)

    def grad_mu(self, x1, x2) -> tuple[np.ndarray, np.ndarray]:
        g1, g2 = self.mu0.grad(x1, x2)
        if self._dmu_spl is not None:
            g1 = g1 + self._dmu_spl[0].ev(x1, x2)
            g2 = g2 + self._dmu_spl[1].ev(x1, x2)
        return g1, g2

    def evaluate(self, x1, x2):
        """(mu, lambda, dmu/dx1, dmu/dx2) at the given points."""
        g1, g2 = self.grad_mu(x1, x2)
        return self.mu(x1, x2), self.lam(x1, x2), g1, g2

    def direct(self, x1, x2):
        """Same as :meth:`evaluate` but by naive summation of the series (oracle)."""
        a = self.spec.decay_alpha
        g1, g2 = self.mu0.grad(x1, x2)
        mu = self.mu0.value(x1, x2) + direct_sum(self.y, a, x1, x2)
        lam = self.spec.Lambda * (self.lambda_hat0.value(x1, x2) + direct_sum(self.z, a, x1, x2))
        return (mu, lam, g1 + direct_sum(self.y, a, x1, x2, 0),
                g2 + direct_sum(self.y, a, x1, x2, 1))


def _check_bounds(name, values, bounds):
    lo = bounds[0] if bounds is not None else 0.0
    vmin = float(values.min())
    if vmin < lo or (bounds is None and vmin <= 0):
        raise FieldBoundError(f"{name} reaches {vmin:.6g}, below the lower bound {lo:.6g}")


def sample_fields(spec: FieldSpec, y=(), z=(), M: int = 256, M_grad: int = 512,
                  check_gradient: bool = True) -> FieldSample:
    """Build the interpolants for parameter point (y, z) on the unit square."""
    y = np.asarray(y, dtype=float).ravel()
    z = np.asarray(z, dtype=float).ravel()
    if y.size != spec.s1 or z.size != spec.s2:
        raise ValueError(f"expected len(y)={spec.s1}, len(z)={spec.s2}; "
                         f"got {y.size}, {z.size}")
    if np.any(np.abs(y) > 0.5) or np.any(np.abs(z) > 0.5):
        raise ValueError("parameters must lie in [-1/2, 1/2]")
    fmax = spec.max_frequency()
    if fmax >= min(M, M_grad):
        raise ValueError(f"grid size too small for frequency {fmax}")
    sample = FieldSample(spec, y, z, M, M_grad)
    nodes = np.linspace(0.0, 1.0, M + 1)
    X1, X2 = np.meshgrid(nodes, nodes, indexing="ij")
    a = spec.decay_alpha

    mu_grid = sample.mu0.value(X1, X2)
    g = np.linspace(0.0, 1.0, M_grad + 1)
    G1, G2 = np.meshgrid(g, g, indexing="ij")
    grad1, grad2 = sample.mu0.grad(G1, G2)
    if y.size:
        S = eval_field_grid(y, a, M)
        mu_grid = mu_grid + S
        sample._mu_spl = _spline(S, (True, True))
        d1, d2 = eval_grad_grid(y, a, M_grad)
        grad1, grad2 = grad1 + d1, grad2 + d2
        sample._dmu_spl = (_spline(d1, (False, True)), _spline(d2, (True, False)))
    _check_bounds("mu", mu_grid, spec.mu_bounds)

    lam_grid = sample.lambda_hat0.value(X1, X2)
    if z.size:
        S = eval_field_grid(z, a, M)
        lam_grid = lam_grid + S
        sample._lam_spl = _spline(S, (True, True))
    _check_bounds("lambda_hat", lam_grid, spec.lambda_hat_bounds)

    if check_gradient:
        mu_min = spec.mu_min if spec.mu_min is not None else float(mu_grid.min())
        thr = spec.c0_threshold
        if thr is None:
            thr = mu_min / (1 + 2 * UNIT_SQUARE_POINCARE**2)
        gmax = float(max(np.abs(grad1).max(), np.abs(grad2).max()))
        if gmax > thr:
            warnings.warn(f"max |grad mu| = {gmax:.3g} exceeds the coercivity threshold "
                          f"{thr:.3g}", CoefficientGradientWarning, stacklevel=2)
    return sample


def constant_sample(mu: float | str = 1.0, Lambda: float = 1.0,
                    lambda_hat: float | str = 1.0) -> FieldSample:
    """Deterministic sample with closed-form mu and lambda_hat (no random terms)."""
    spec = FieldSpec(mu0=mu if isinstance(mu, str) else f"const:{mu}",
                     lambda_hat0=lambda_hat if isinstance(lambda_hat, str) else f"const:{lambda_hat}",
                     Lambda=Lambda, n_diag=0)
    return FieldSample(spec, np.zeros(0), np.zeros(0))


def save_grid(grid: np.ndarray, path) -> None:
    np.savetxt(path, grid, delimiter=",", fmt="%.17g")


def load_grid(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)
