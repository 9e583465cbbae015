"""QMC convergence studies (random coefficients) and the dimension-truncation study."""
from __future__ import annotations

import logging
import math
import time

import numpy as np

from ..qmc import (alternating_columns, bundled_rule, combined_nodes, monte_carlo_points,
                   rule_points, shift_center, tensor_nodes)
from .analysis import fit_rate
from .config import ExperimentConfig
from .pipeline import StudySetup, evaluate_nodes, field_spec_for
from .report import ExperimentReport

__all__ = ["run_qmc_study", "run_truncation_study", "qmc_nodes", "setup_for"]

log = logging.getLogger(__name__)


def setup_for(cfg: ExperimentConfig, Lambda: float, space: str, experiment=None) -> StudySetup:
    spec = field_spec_for(experiment or cfg.experiment, Lambda, cfg.n_diag, cfg.decay_alpha,
                          cfg.s1, cfg.s2, cfg.c0_threshold)
    return StudySetup(spec, space, cfg.coarse_n, cfg.n_crossed, cfg.perturb, cfg.mesh_seed,
                      cfg.levels, cfg.quad_degree, cfg.M, cfg.M_grad, cfg.solver, cfg.tol,
                      cfg.max_iter)


def qmc_nodes(m: int, s1: int, s2: int, interlace: int = 2, mode: str = "single"):
    """Unit-cube nodes with 2^m points and the rule description used.

    With one random block the rule covers just that block.  With two blocks
    ``combined`` uses one rule with y and z on alternating base coordinates;
    ``tensor`` multiplies a 2^ceil(m/2) rule for y with a 2^floor(m/2) rule for z.
    """
    if s1 == 0 or s2 == 0:
        rule = bundled_rule(m, s1 + s2, interlace)
        return rule_points(rule).points, f"{rule.name}[:{s1 + s2}]"
    if mode == "tensor":
        m1, m2 = (m + 1) // 2, m // 2
        ry, rz = bundled_rule(m1, s1, interlace), bundled_rule(m2, s2, interlace)
        return tensor_nodes(ry, rz), f"{ry.name}[:{s1}] x {rz.name}[:{s2}]"
    base = bundled_rule(m, s1 + s2, interlace)
    rule = base.select(alternating_columns(s1, s2))
    return combined_nodes(rule, s1, s2), f"{base.name}[:{s1 + s2}] alternating"


def _estimate(setup, nodes, workers, source):
    results = evaluate_nodes(setup, shift_center(nodes), workers=workers, source=source)
    values = [r.value for r in results]
    return math.fsum(values) / len(values), results


def run_qmc_study(cfg: ExperimentConfig) -> ExperimentReport:
    report = ExperimentReport(cfg.experiment, cfg)
    t_start = time.perf_counter()
    summary = {}
    for Lambda in cfg.Lambda:
        for space in cfg.spaces:
            setup = setup_for(cfg, Lambda, space)
            s1, s2 = setup.spec.s1, setup.spec.s2
            key = f"{space}_Lambda{Lambda:g}"
            estimates, sample_rows, rules = {}, [], {}
            n_grad = n_fallback = max_it = 0
            for m in (*cfg.m_list, cfg.m_ref):
                t0 = time.perf_counter()
                nodes, rule_name = qmc_nodes(m, s1, s2, cfg.interlace, cfg.node_mode)
                est, results = _estimate(setup, nodes, cfg.workers, rule_name)
                estimates[m] = est
                rules[len(nodes)] = rule_name
                for i, r in enumerate(results):
                    sample_rows.append({"Lambda": Lambda, "space": space, "N": len(nodes),
                                        "node": i, "value": r.value,
                                        "iterations": " ".join(map(str, r.iterations))})
                    n_grad += r.gradient_warnings
                    n_fallback += int(r.richardson_fallback)
                    max_it = max(max_it, *r.iterations)
                report.timings[f"{key}_N{len(nodes)}"] = time.perf_counter() - t0
                log.info("%s N=%d estimate=%.12g", key, len(nodes), est)
            ref = estimates[cfg.m_ref]
            n_vals = [2**m for m in cfg.m_list]
            errors = [abs(estimates[m] - ref) for m in cfg.m_list]
            rows = [{"Lambda": Lambda, "space": space, "N": n, "estimate": estimates[m],
                     "error": e, "rate": None}
                    for n, m, e in zip(n_vals, cfg.m_list, errors)]
            entry = {"reference": ref, "N_ref": 2**cfg.m_ref, "rules": rules,
                     "max_iterations": max_it, "gradient_warnings": n_grad,
                     "richardson_fallbacks": n_fallback}
            if len(errors) > 1 and all(e > 0 for e in errors):
                fit = fit_rate(errors, n_vals)
                for r, rate in zip(rows[1:], fit.rates):
                    r["rate"] = rate
                entry.update(rates=list(fit.rates), slope=fit.slope)
                if len(errors) > 2:
                    entry["slope_without_first"] = fit_rate(errors[1:], n_vals[1:]).slope
            if cfg.mc_baseline:
                mc_rows, mc = _mc_baseline(cfg, setup, ref, Lambda, space)
                report.add_rows("mc_baseline", mc_rows)
                entry.update(mc)
            # error bookkeeping: QMC error at the largest N, extrapolation indicator
            # (gap between the two deepest Richardson entries) and their sum
            fem = _extrapolation_gap(setup, cfg)
            entry["error_budget"] = {"qmc": errors[-1], "fem_indicator": fem,
                                     "combined": errors[-1] + fem}
            summary[key] = entry
            report.add_rows("qmc", rows)
            report.add_rows("samples", sample_rows)
    report.summary = summary
    report.timings["total"] = time.perf_counter() - t_start
    return report


def _extrapolation_gap(setup: StudySetup, cfg: ExperimentConfig) -> float:
    from .analysis import richardson_table

    zero = np.zeros((1, setup.spec.s1 + setup.spec.s2))
    vals = evaluate_nodes(setup, zero, workers=1, source="nominal")[0].level_values
    if len(vals) < 2:
        return 0.0
    T = richardson_table(vals)
    return abs(T[-1][-1] - T[-1][-2])


def _mc_baseline(cfg, setup, ref, Lambda, space):
    """RMS error of independent seeded Monte Carlo replicates against the QMC reference."""
    s = setup.spec.s1 + setup.spec.s2
    n_vals = [2**m for m in cfg.m_list]
    sq = {n: [] for n in n_vals}
    for rep in range(cfg.mc_replicates):
        for n in n_vals:
            seed = cfg.mc_seed + 7919 * rep + n
            est, _ = _estimate(setup, monte_carlo_points(n, s, seed), cfg.workers,
                               f"mc seed {seed}")
            sq[n].append((est - ref) ** 2)
    rms = [math.sqrt(math.fsum(sq[n]) / len(sq[n])) for n in n_vals]
    rows = [{"Lambda": Lambda, "space": space, "N": n, "rms_error": e, "rate": None}
            for n, e in zip(n_vals, rms)]
    out = {"mc_replicates": cfg.mc_replicates}
    if len(rms) > 1:
        fit = fit_rate(rms, n_vals)
        for r, rate in zip(rows[1:], fit.rates):
            r["rate"] = rate
        out.update(mc_rates=list(fit.rates), mc_slope=fit.slope)
    return rows, out


def run_truncation_study(cfg: ExperimentConfig) -> ExperimentReport:
    """|I_s - I_smax| for increasing s with a fixed rule, random lambda model."""
    report = ExperimentReport("truncation", cfg)
    t_start = time.perf_counter()
    Lambda = cfg.Lambda[0]
    space = cfg.spaces[0]
    setup = setup_for(cfg, Lambda, space, experiment="truncation")
    s_max = setup.spec.s2
    s_list = [s for s in cfg.s_list if s < s_max]
    if not s_list:
        raise ValueError(f"s_list has no entry below s_max = {s_max}")
    nodes = rule_points(bundled_rule(cfg.trunc_m, s_max, cfg.interlace)).points
    shifted = shift_center(nodes)
    estimates = {}
    for s in (*s_list, s_max):
        t0 = time.perf_counter()
        z = shifted.copy()
        z[:, s:] = 0.0
        results = evaluate_nodes(setup, z, workers=cfg.workers, source=f"truncated s={s}")
        estimates[s] = math.fsum(r.value for r in results) / len(results)
        report.timings[f"s{s}"] = time.perf_counter() - t0
    ref = estimates[s_max]
    rows = [{"Lambda": Lambda, "s": s, "estimate": estimates[s],
             "error": abs(estimates[s] - ref), "rate": None} for s in s_list]
    rows.append({"Lambda": Lambda, "s": s_max, "estimate": ref, "error": 0.0, "rate": None})
    errs = [r["error"] for r in rows[:-1]]
    summary = {"s_max": s_max, "N": len(nodes), "reference": ref}
    if len(errs) > 1 and all(e > 0 for e in errs):
        fit = fit_rate(errs, s_list)
        for r, rate in zip(rows[1:-1], fit.rates):
            r["rate"] = rate
        summary.update(slope=fit.slope, rates=list(fit.rates))
    report.add_rows("truncation", rows)
    report.summary = summary
    report.timings["total"] = time.perf_counter() - t_start
    return report
