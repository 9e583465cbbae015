"""Sparse Cholesky factorizations and preconditioned conjugate gradients."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import DofMap, FeFunction, FemSystem, assemble
from .fields import constant_sample
from .mesh import TriMesh

try:  # optional CHOLMOD backend
    from sksparse.cholmod import CholmodNotPositiveDefiniteError, cholesky as _cholmod
except ImportError:  # pragma: no cover - depends on the environment
    _cholmod = None
    CholmodNotPositiveDefiniteError = None

__all__ = ["Factorization", "Preconditioner", "SolveStats", "ConvergenceError",
           "FactorizationError", "IndefiniteSystemError", "factorize", "build_preconditioner",
           "clear_preconditioner_cache", "pcg_solve", "direct_solve", "HAVE_CHOLMOD"]

HAVE_CHOLMOD = _cholmod is not None


class FactorizationError(RuntimeError):
    pass


class IndefiniteSystemError(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = list(history)


class Factorization:
    """Callable ``b -> A^{-1} b`` for a sparse SPD matrix."""

    def __init__(self, matrix: sp.spmatrix, backend: str | None = None):
        backend = backend or ("cholmod" if HAVE_CHOLMOD else "splu")
        A = sp.csc_matrix(matrix)
        if backend == "cholmod":
            if not HAVE_CHOLMOD:
                raise FactorizationError("CHOLMOD backend requested but scikit-sparse is missing")
            try:
                self._solve = _cholmod(A, ordering_method="amd")
            except CholmodNotPositiveDefiniteError as exc:
                raise FactorizationError(f"matrix is not positive definite: {exc}") from exc
        elif backend == "splu":
            try:
                lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A",
                               options={"SymmetricMode": True}, diag_pivot_thresh=0.0)
            except RuntimeError as exc:
                raise FactorizationError(str(exc)) from exc
            # for an SPD matrix the LU pivots are the Cholesky pivots squared
            if np.any(lu.U.diagonal() <= 0):
                raise FactorizationError("matrix is not positive definite")
            self._solve = lu.solve
        else:
            raise ValueError(f"unknown backend {backend!r}")
        self.backend = backend
        self.shape = A.shape

    def __call__(self, b: np.ndarray) -> np.ndarray:
        return np.asarray(self._solve(b)).reshape(np.shape(b))


def factorize(matrix, backend: str | None = None) -> Factorization:
    return Factorization(matrix, backend)


@dataclass(eq=False)
class Preconditioner:
    factor: Factorization
    mesh_id: str
    space: str
    Lambda: float
    n_dofs: int

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return self.factor(r)


_CACHE: dict[tuple, Preconditioner] = {}


def build_preconditioner(mesh: TriMesh, space: str, Lambda: float,
                         quad_degree: int = 4, backend: str | None = None,
                         cache: bool = True) -> Preconditioner:
    """Factorize the stiffness matrix with mu = 1 and lambda = Lambda."""
    if Lambda < 1:
        raise ValueError("Lambda must be >= 1")
    key = (mesh.fingerprint(), space, float(Lambda), quad_degree, backend)
    if cache and key in _CACHE:
        return _CACHE[key]
    P = assemble(mesh, constant_sample(1.0, Lambda=Lambda), space, quad_degree=quad_degree).matrix
    pre = Preconditioner(factorize(P, backend), key[0], space, float(Lambda), P.shape[0])
    if cache:
        _CACHE[key] = pre
    return pre


def clear_preconditioner_cache() -> None:
    _CACHE.clear()


@dataclass
class SolveStats:
    iterations: int
    residual: float
    wall_time: float
    history: list = field(default_factory=list, repr=False)


def pcg_solve(system: FemSystem, precond: Preconditioner | None = None, tol: float = 1e-10,
              max_iter: int = 500) -> tuple[FeFunction, SolveStats]:
    """Preconditioned CG stopping when ``sqrt(r.Pr / r0.Pr0) <= tol``."""
    t0 = time.perf_counter()
    A, b = system.matrix, system.rhs
    if precond is not None and precond.n_dofs != len(b):
        raise ValueError("preconditioner and system have different sizes")
    M = precond if precond is not None else (lambda r: r.copy())
    x = np.zeros_like(b)
    r = b.copy()
    z = M(r)
    rz = float(r @ z)
    history = [1.0]
    if rz == 0.0:
        return FeFunction(system.dofmap, x), SolveStats(0, 0.0, time.perf_counter() - t0, history)
    rz0 = rz
    p = z.copy()
    for it in range(1, max_iter + 1):
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0:
            raise IndefiniteSystemError(f"p.Ap = {pAp:.3e} <= 0 at iteration {it}")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = M(r)
        rz_new = float(r @ z)
        rel = np.sqrt(max(rz_new, 0.0) / rz0)
        history.append(rel)
        if rel <= tol:
            return FeFunction(system.dofmap, x), SolveStats(it, rel, time.perf_counter() - t0,
                                                             history)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(f"PCG did not reach {tol:g} in {max_iter} iterations "
                           f"(last {history[-1]:.3e})", history)


def direct_solve(system: FemSystem, backend: str | None = None) -> FeFunction:
    """Factorize the system matrix itself and solve."""
    try:
        x = factorize(system.matrix, backend)(system.rhs)
    except FactorizationError as exc:
        raise IndefiniteSystemError(str(exc)) from exc
    return FeFunction(system.dofmap, x)


def solve_on(mesh: TriMesh, sample, space: str, f, quad_degree: int = 4) -> FeFunction:
    """Assemble and solve directly; convenience for deterministic studies."""
    system = assemble(mesh, sample, space, f=f, quad_degree=quad_degree,
                      dofmap=DofMap.build(mesh, space))
    return direct_solve(system)
