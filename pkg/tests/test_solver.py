import numpy as np
import pytest
import scipy.sparse as sp

from elastqmc.experiments.pipeline import field_spec_for, load_force
from elastqmc.fem import DofMap, FemSystem, assemble, functional_average_u2
from elastqmc.fields import constant_sample, sample_fields
from elastqmc.mesh import make_structured_mesh, refine_family
from elastqmc.solver import (HAVE_CHOLMOD, ConvergenceError, Factorization, FactorizationError,
                             IndefiniteSystemError, build_preconditioner,
                             clear_preconditioner_cache, direct_solve, pcg_solve)

FAMILY = refine_family(make_structured_mesh(n=4, perturb=0.1, seed=3), 3)


def _ex_sample(experiment, Lambda, seed, n_diag=11):
    spec = field_spec_for(experiment, Lambda, n_diag)
    rng = np.random.default_rng(seed)
    y = rng.uniform(-0.5, 0.5, spec.s1)
    z = rng.uniform(-0.5, 0.5, spec.s2)
    return sample_fields(spec, y, z, M=64, M_grad=128, check_gradient=False)


def _system(mesh, sample, space="cr"):
    return assemble(mesh, sample, space, f=load_force)


def test_exact_preconditioner_converges_in_one_step():
    mesh = FAMILY[1]
    P = build_preconditioner(mesh, "cr", 1.0)
    u, stats = pcg_solve(_system(mesh, constant_sample(1.0, 1.0)), P)
    assert stats.iterations == 1


def test_nearly_incompressible_preconditioner_factorizes():
    P = build_preconditioner(FAMILY[-1], "cr", 1000.0, cache=False)
    r = np.ones(P.n_dofs)
    assert np.all(np.isfinite(P(r)))


def test_zero_rhs_returns_immediately():
    mesh = FAMILY[0]
    system = assemble(mesh, constant_sample(), "cr")
    u, stats = pcg_solve(system, build_preconditioner(mesh, "cr", 1.0))
    assert stats.iterations == 0 and not u.coeffs.any()


@pytest.mark.parametrize("experiment", ["ex2", "ex3", "ex4"])
@pytest.mark.parametrize("Lambda", [1.0, 1000.0])
def test_pcg_agrees_with_direct_solve(experiment, Lambda):
    mesh = FAMILY[-1]
    system = _system(mesh, _ex_sample(experiment, Lambda, 7))
    u, stats = pcg_solve(system, build_preconditioner(mesh, "cr", Lambda), tol=1e-10)
    assert stats.iterations <= 30
    assert stats.residual <= 1e-10
    ud = direct_solve(system)
    assert functional_average_u2(u) == pytest.approx(functional_average_u2(ud), abs=1e-8)
    assert np.abs(u.coeffs - ud.coeffs).max() <= 1e-8 * np.abs(ud.coeffs).max()


def test_history_ends_below_tolerance():
    mesh = FAMILY[1]
    _, stats = pcg_solve(_system(mesh, _ex_sample("ex2", 1.0, 2)),
                         build_preconditioner(mesh, "cr", 1.0), tol=1e-9)
    assert stats.history[0] == 1.0 and stats.history[-1] == stats.residual <= 1e-9
    assert len(stats.history) == stats.iterations + 1


def test_energy_error_decreases_with_iterations():
    mesh = FAMILY[1]
    system = _system(mesh, _ex_sample("ex3", 1000.0, 4))
    exact = direct_solve(system).coeffs
    P = build_preconditioner(mesh, "cr", 1000.0)
    runs = {}
    for tol in 10.0 ** -np.arange(1, 11):
        u, stats = pcg_solve(system, P, tol=tol)
        e = u.coeffs - exact
        runs[stats.iterations] = float(np.sqrt(e @ (system.matrix @ e)))
    its = sorted(runs)
    assert len(its) >= 4
    assert all(runs[b] <= runs[a] for a, b in zip(its, its[1:]))


def test_iterations_mesh_independent():
    sample = _ex_sample("ex2", 1000.0, 11)
    its = []
    for mesh in FAMILY:
        _, stats = pcg_solve(_system(mesh, sample), build_preconditioner(mesh, "cr", 1000.0))
        its.append(stats.iterations)
    assert max(its) <= 2 * min(its)


def test_iterations_robust_in_lambda():
    mesh = FAMILY[-1]
    its = {}
    for Lambda in (1.0, 10.0, 100.0, 1000.0, 1e4):
        _, stats = pcg_solve(_system(mesh, _ex_sample("ex2", Lambda, 11)),
                             build_preconditioner(mesh, "cr", Lambda))
        its[Lambda] = stats.iterations
    assert max(its.values()) <= 3 * min(its.values())


def test_preconditioner_cache_keys():
    clear_preconditioner_cache()
    a = build_preconditioner(FAMILY[0], "cr", 10.0)
    assert build_preconditioner(FAMILY[0], "cr", 10.0) is a
    assert build_preconditioner(FAMILY[0], "cr", 20.0) is not a
    assert build_preconditioner(FAMILY[0], "p1", 10.0) is not a
    assert build_preconditioner(FAMILY[1], "cr", 10.0) is not a
    clear_preconditioner_cache()
    assert build_preconditioner(FAMILY[0], "cr", 10.0) is not a


def test_preconditioner_rejects_small_lambda():
    with pytest.raises(ValueError):
        build_preconditioner(FAMILY[0], "cr", 0.5)


def test_size_mismatch_rejected():
    with pytest.raises(ValueError):
        pcg_solve(_system(FAMILY[1], constant_sample()), build_preconditioner(FAMILY[0], "cr", 1.0))


def test_convergence_error_carries_history():
    mesh = FAMILY[-1]
    with pytest.raises(ConvergenceError) as info:
        pcg_solve(_system(mesh, _ex_sample("ex2", 1.0, 1)), None, tol=1e-12, max_iter=3)
    assert len(info.value.history) == 4


def test_indefinite_system_detected():
    dm = DofMap.build(FAMILY[0], "cr")
    n = dm.n_dofs
    A = sp.diags(np.where(np.arange(n) % 2 == 0, 1.0, -1.0)).tocsr()
    system = FemSystem(A, np.ones(n), dm, 4)
    with pytest.raises(IndefiniteSystemError):
        pcg_solve(system)
    with pytest.raises(IndefiniteSystemError):
        direct_solve(system, backend="splu")
    with pytest.raises(FactorizationError):
        Factorization(A, backend="splu")


@pytest.mark.skipif(not HAVE_CHOLMOD, reason="scikit-sparse not installed")
def test_backends_agree():
    mesh = FAMILY[-1]
    system = _system(mesh, _ex_sample("ex4", 1000.0, 3))
    a = direct_solve(system, backend="splu").coeffs
    b = direct_solve(system, backend="cholmod").coeffs
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-10 * np.abs(a).max())
