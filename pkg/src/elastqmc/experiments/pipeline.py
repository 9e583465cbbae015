"""Per-parameter-point pipeline: fields -> assembly -> solve -> functional -> extrapolate.

Node batches can be farmed out to worker processes; results come back in
node order so reductions never depend on scheduling.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..fem import DofMap, FemSystem, _local_blocks, _scatter, assemble_load, \
    functional_average_u2
from ..fields import CoefficientGradientWarning, FieldBoundError, FieldSpec, sample_fields
from ..mesh import make_structured_mesh, refine_family
from ..solver import (ConvergenceError, IndefiniteSystemError, build_preconditioner,
                      direct_solve, pcg_solve)
from .analysis import RichardsonWarning, richardson_functional

__all__ = ["SampleFailure", "StudySetup", "NodeResult", "field_spec_for", "load_force",
           "evaluate_nodes"]

UNIT_SQUARE = ((0.0, 1.0), (0.0, 1.0))


def load_force(x1, x2):
    """Body force of the random-coefficient examples."""
    return 1.0 - x2**2, 2.0 * x1 - 20.0


class SampleFailure(RuntimeError):
    """A parameter point whose field or solve failed; carries its provenance."""

    def __init__(self, message, index, source):
        super().__init__(f"node {index} ({source}): {message}")
        self.index = index
        self.source = source


def field_spec_for(experiment: str, Lambda: float, n_diag: int, decay_alpha: float = 2.0,
                   s1: int | None = None, s2: int | None = None,
                   c0_threshold: float | None = None) -> FieldSpec:
    """Coefficient model of each random-coefficient example."""
    s = n_diag * (n_diag + 1) // 2
    if experiment in ("ex2", "truncation"):
        mu0, lam0, d1, d2, mb = "affine", "one", 0, s, (1.0, 3.0)
    elif experiment == "ex3":
        mu0, lam0, d1, d2, mb = "one", "sin2pi", s, 0, (0.5, 1.5)
    elif experiment == "ex4":
        mu0, lam0, d1, d2, mb = "one", "one", s, s, (0.5, 1.5)
    else:
        raise ValueError(f"no random field model for {experiment!r}")
    return FieldSpec(mu0=mu0, lambda_hat0=lam0, Lambda=Lambda, decay_alpha=decay_alpha,
                     n_diag=n_diag, s1=d1 if s1 is None else s1, s2=d2 if s2 is None else s2,
                     mu_bounds=mb, lambda_hat_bounds=(0.5, 1.5), c0_threshold=c0_threshold)


@dataclass(frozen=True)
class StudySetup:
    """Everything a worker needs to rebuild its shared state (picklable)."""

    spec: FieldSpec
    space: str = "cr"
    coarse_n: int = 4
    n_crossed: int = 0
    perturb: float = 0.1
    mesh_seed: int = 3
    levels: int = 4
    quad_degree: int = 4
    M: int = 64
    M_grad: int = 128
    solver: str = "pcg"
    tol: float = 1e-10
    max_iter: int = 500


@dataclass
class NodeResult:
    value: float                 # extrapolated functional
    level_values: tuple
    iterations: tuple
    gradient_warnings: int
    richardson_fallback: bool


class _Worker:
    """Meshes, dof maps, load vectors and preconditioners for one setup."""

    def __init__(self, setup: StudySetup):
        self.setup = setup
        coarse = make_structured_mesh(UNIT_SQUARE, setup.coarse_n, setup.perturb,
                                      setup.mesh_seed, setup.n_crossed)
        self.meshes = refine_family(coarse, setup.levels)
        self.dofmaps = [DofMap.build(m, setup.space) for m in self.meshes]
        self.rhs = [assemble_load(m, load_force, d, setup.quad_degree)
                    for m, d in zip(self.meshes, self.dofmaps)]
        self.precond = None
        if setup.solver == "pcg":
            self.precond = [build_preconditioner(m, setup.space, setup.spec.Lambda,
                                                 setup.quad_degree) for m in self.meshes]

    def run(self, y, z) -> NodeResult:
        s = self.setup
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", CoefficientGradientWarning)
            warnings.simplefilter("always", RichardsonWarning)
            sample = sample_fields(s.spec, y, z, s.M, s.M_grad)
            values, iters = [], []
            for k, (dm, b) in enumerate(zip(self.dofmaps, self.rhs)):
                A = _scatter(dm, _local_blocks(dm, sample, s.quad_degree))
                system = FemSystem(A, b, dm, s.quad_degree)
                if s.solver == "pcg":
                    u, stats = pcg_solve(system, self.precond[k], s.tol, s.max_iter)
                    iters.append(stats.iterations)
                else:
                    u = direct_solve(system)
                    iters.append(0)
                values.append(functional_average_u2(u))
            value = richardson_functional(values) if len(values) > 1 else values[0]
        n_grad = sum(issubclass(w.category, CoefficientGradientWarning) for w in caught)
        fallback = any(issubclass(w.category, RichardsonWarning) for w in caught)
        return NodeResult(value, tuple(values), tuple(iters), n_grad, fallback)


_STATE: dict = {}


def _worker_for(setup: StudySetup) -> _Worker:
    w = _STATE.get(setup)
    if w is None:
        _STATE.clear()
        w = _STATE[setup] = _Worker(setup)
    return w


def _run_batch(setup: StudySetup, start: int, nodes: np.ndarray, s1: int, source: str):
    worker = _worker_for(setup)
    out = []
    for i, r in enumerate(nodes):
        try:
            out.append(worker.run(r[:s1], r[s1:]))
        except (FieldBoundError, ConvergenceError, IndefiniteSystemError) as exc:
            raise SampleFailure(str(exc), start + i, source) from exc
    return out


def evaluate_nodes(setup: StudySetup, nodes: np.ndarray, workers: int = 1,
                   source: str = "", batch: int = 16) -> list[NodeResult]:
    """Run the pipeline on each row of ``nodes`` (already shifted to [-1/2, 1/2]).

    Columns ``[:s1]`` are y and the rest z.  Results are returned in row order.
    """
    nodes = np.asarray(nodes, dtype=float)
    s1 = setup.spec.s1
    if nodes.shape[1] != s1 + setup.spec.s2:
        raise ValueError(f"nodes have {nodes.shape[1]} columns, expected {s1 + setup.spec.s2}")
    starts = range(0, len(nodes), batch)
    if workers == 1:
        results = []
        for st in starts:
            results += _run_batch(setup, st, nodes[st:st + batch], s1, source)
        return results
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_batch, setup, st, nodes[st:st + batch], s1, source)
                   for st in starts]
        results = []
        for fut in futures:
            results += fut.result()
    return results
