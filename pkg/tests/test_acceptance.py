"""Acceptance criteria 1-8 at desk scale.

Each test prints one ``criterion N: PASS|FAIL`` line to the terminal.
"""
import time

import numpy as np
import pytest

from elastqmc.experiments import build_config, run_experiment
from elastqmc.experiments.analysis import richardson_functional
from elastqmc.experiments.config import replace
from elastqmc.experiments.pipeline import evaluate_nodes
from elastqmc.experiments.qmc_study import qmc_nodes, setup_for
from elastqmc.fem import DofMap, FeFunction, assemble, midpoint_jumps, project_cr
from elastqmc.fields import FieldSpec, direct_sum, eval_field_grid, sample_fields
from elastqmc.mesh import make_structured_mesh
from elastqmc.qmc import base_lattice_points, bundled_rule, shift_center
from oracles import smooth_form_values

pytestmark = pytest.mark.slow

SLOPE_WINDOW = (-2.5, -1.5)


def _report(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def _desk(experiment, **over):
    return build_config({"experiment": experiment}, over, profile="desk")


@pytest.fixture(scope="module")
def ex1():
    t0 = time.perf_counter()
    rep = run_experiment(_desk("ex1"))
    return rep, time.perf_counter() - t0


@pytest.fixture(scope="module")
def ex2():
    return run_experiment(_desk("ex2"))


def _rows(rep, space, Lambda):
    return [r for r in rep.tables["errors"] if r["space"] == space and r["Lambda"] == Lambda]


def test_criterion_1_manufactured_rates(ex1, capsys):
    rep, seconds = ex1
    s = rep.summary["cr_Lambda1"]
    ok = (1.90 <= s["l2_final_rate"] <= 2.10 and 0.95 <= s["h1_final_rate"] <= 1.05
          and seconds <= 180)
    _report(capsys, 1, ok, f"L2 rate {s['l2_final_rate']:.3f}, H1 rate "
                           f"{s['h1_final_rate']:.3f}, {seconds:.0f} s for the whole study")


def test_criterion_2_locking_robustness(ex1, capsys):
    rep, _ = ex1
    cr1, cr1000 = _rows(rep, "cr", 1.0), _rows(rep, "cr", 1000.0)
    worst = max(abs(b[k] / a[k] - 1) for a, b in zip(cr1, cr1000)
                for k in ("l2_error", "h1_error"))
    p1 = _rows(rep, "p1", 1000.0)
    ratio = p1[1]["l2_error"] / cr1000[1]["l2_error"]
    _report(capsys, 2, worst <= 0.2 and ratio >= 10,
            f"max CR change {100 * worst:.1f}%, conforming/nonconforming L2 at level 1 "
            f"{ratio:.0f}x")


def test_criterion_3_example2_rates(ex2, capsys):
    lo, hi = SLOPE_WINDOW
    details, ok = [], True
    for key, s in ex2.summary.items():
        ok &= lo <= s["slope"] <= hi and -0.8 <= s["mc_slope"] <= -0.2
        details.append(f"{key}: QMC {s['slope']:.2f}, MC {s['mc_slope']:.2f}")
    assert len(ex2.summary) == 2
    _report(capsys, 3, ok, "; ".join(details))


@pytest.mark.parametrize("experiment", ["ex3", "ex4"])
def test_criterion_4_example3_and_4_rates(experiment, capsys):
    rep = run_experiment(_desk(experiment))
    lo, hi = SLOPE_WINDOW
    # Example 4: the first pairwise rate is preasymptotic and exempt
    field = "slope_without_first" if experiment == "ex4" else "slope"
    slopes = {k: s[field] for k, s in rep.summary.items()}
    ok = len(slopes) == 2 and all(lo <= v <= hi for v in slopes.values())
    _report(capsys, 4, ok, f"{experiment} " + ", ".join(f"{k} {v:.2f}"
                                                        for k, v in slopes.items()))


def test_criterion_5_property_suite(capsys):
    checks = {}
    mesh = make_structured_mesh(n=6, perturb=0.15, seed=2, n_crossed=5)
    rng = np.random.default_rng(0)
    spec = FieldSpec(mu0="one", lambda_hat0="one", Lambda=100.0, n_diag=11)
    y, z = rng.uniform(-0.5, 0.5, (2, 66))
    sample = sample_fields(spec, y, z, M=256, M_grad=512, check_gradient=False)
    A = assemble(mesh, sample, "cr").matrix
    checks["symmetry"] = abs(A - A.T).max() == 0.0
    dm = DofMap.build(mesh, "cr")
    checks["midpoint jumps"] = midpoint_jumps(FeFunction(dm, rng.standard_normal(dm.n_dofs))) \
        <= 1e-12

    def curl(x1, x2):
        a, b = x1**2 * (1 - x1) ** 2, x2**2 * (1 - x2) ** 2
        da, db = 2 * x1 * (1 - x1) * (1 - 2 * x1), 2 * x2 * (1 - x2) * (1 - 2 * x2)
        return np.stack([a * db, -da * b])

    g = project_cr(mesh, curl).gradients()
    checks["div-free projection"] = np.abs(g[:, 0, 0] + g[:, 1, 1]).max() <= 1e-12
    bhat, b, _ = smooth_form_values()
    checks["form equivalence"] = abs(bhat - b) <= 1e-6 * abs(b)
    c = rng.uniform(-0.5, 0.5, 253)
    x = np.arange(65) / 64
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    checks["FFT vs direct"] = np.abs(eval_field_grid(c, 2.0, 64)
                                     - direct_sum(c, 2.0, X1, X2)).max() <= 1e-12
    p1, p2 = rng.random((2, 1000))
    checks["interpolant"] = max(np.abs(a - b).max() for a, b in
                                zip(sample.evaluate(p1, p2), sample.direct(p1, p2))) <= 1e-6
    equi = True
    for m in range(1, 11):
        pts = base_lattice_points(bundled_rule(m, 20))
        for j in range(pts.shape[1]):
            equi &= bool(np.all(np.bincount((pts[:, j] * 2).astype(int), minlength=2)
                                == 2 ** (m - 1)))
    checks["equidistribution"] = equi
    cs = (1.25, 0.8, -2.0, 5.0)
    vals = [sum(ck * h ** (2 * k) for k, ck in enumerate(cs)) for h in (0.4, 0.2, 0.1, 0.05)]
    checks["Richardson"] = abs(richardson_functional(vals) - cs[0]) <= 1e-13
    failed = [k for k, v in checks.items() if not v]
    _report(capsys, 5, not failed, f"{len(checks) - len(failed)}/{len(checks)} properties"
                                   + (f", failed: {failed}" if failed else ""))


def test_criterion_6_solver(ex2, capsys):
    its = {k: s["max_iterations"] for k, s in ex2.summary.items()}
    cfg = _desk("ex2")
    gaps = []
    for Lambda in cfg.Lambda:
        nodes, _ = qmc_nodes(4, 0, cfg.s_default)
        pcg = evaluate_nodes(setup_for(cfg, Lambda, "cr"), shift_center(nodes[:4]))
        direct = evaluate_nodes(setup_for(replace(cfg, solver="direct"), Lambda, "cr"),
                                shift_center(nodes[:4]))
        gaps += [abs(a - b) for p, d in zip(pcg, direct)
                 for a, b in zip(p.level_values, d.level_values)]
    ok = max(its.values()) <= 30 and max(gaps) <= 1e-8
    _report(capsys, 6, ok, f"max iterations {its}, max PCG/direct functional gap "
                           f"{max(gaps):.1e}")


@pytest.fixture(scope="module")
def truncation():
    return run_experiment(_desk("truncation"))


def test_criterion_7_truncation(truncation, capsys):
    s = truncation.summary
    _report(capsys, 7, s["slope"] <= -0.7, f"slope {s['slope']:.2f} over s <= {s['s_max']}")


def test_criterion_8_determinism(truncation, tmp_path, capsys):
    cfg = _desk("truncation")
    truncation.write(tmp_path / "w1")
    run_experiment(replace(cfg, workers=2)).write(tmp_path / "w2")
    names = sorted(p.name for p in (tmp_path / "w1").iterdir() if p.name != "timings.json")
    same = all((tmp_path / "w1" / n).read_bytes() == (tmp_path / "w2" / n).read_bytes()
               for n in names)
    _report(capsys, 8, same and bool(names), f"{len(names)} report files compared, workers 1 vs 2")
