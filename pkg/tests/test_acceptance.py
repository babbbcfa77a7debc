"""Acceptance suite.

Each test implements one acceptance criterion at its stated tolerance and
prints a single PASS/FAIL line (run with `pytest -s` to see them inline).
The heavy Monte Carlo criterion keeps its mandated 200k paths / dt = 1e-3.
"""

import time

import numpy as np
import pytest

from omegalab import (check_identity_W, check_identity_Z, laplace_residual,
                      parisian, phi, scale_basis, step_family, affine_family,
                      Z)
from omegalab.control import (barrier_value_at, find_barrier, hjb_residual,
                              value_at)
from omegalab.mc import McConfig, simulate_value
from omegalab.volterra import SolverConfig, convexity_report, solve_H
from conftest import Q, PHI, A

GRID_STEP = 1e-3
X_MAX = 2.0


def _report(num, ok, detail, elapsed, budget):
    status = "PASS" if ok and elapsed < budget else "FAIL"
    print(f"[criterion {num:02d}] {status} ({elapsed:.1f}s / budget {budget:.0f}s) "
          f"{detail}", flush=True)
    assert ok, f"criterion {num}: {detail}"
    assert elapsed < budget, f"criterion {num} exceeded runtime budget: {elapsed:.1f}s"


def _step_configs():
    return [(f"step_n{n}", step_family(n, A, PHI)) for n in range(1, 6)]


def _affine_configs():
    out = []
    for m in (-1.5, -1.0, -0.5, 0.0):
        rate = affine_family(m, A, PHI)
        out.append((f"affine_m{m:g}", rate))
    return out


def test_criterion_01_laplace_transform(model):
    t0 = time.perf_counter()
    basis = scale_basis(model, Q)
    base = phi(model, Q)
    resids = [laplace_residual(model, basis, base + d) for d in (0.5, 1.0, 2.0)]
    ok = all(r < 1e-6 for r in resids)
    _report(1, ok, f"laplace residuals {['%.2e' % r for r in resids]}",
            time.perf_counter() - t0, 1.0)


def test_criterion_02_convolution_identities(model):
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240809)
    cache = {}

    def basis(r):
        if r not in cache:
            cache[r] = scale_basis(model, r)
        return cache[r]

    worst_w = worst_z = 0.0
    for _ in range(50):
        p = rng.uniform(0.0, 1.6)
        r = rng.uniform(0.0, 1.6)
        while abs(p - r) < 0.05:
            r = rng.uniform(0.0, 1.6)
        s = max(p, r) + rng.uniform(0.1, 0.5)
        a = rng.uniform(-1.5, 0.0)
        x = a + rng.uniform(0.1, 1.0)
        p, r, s = round(p, 6), round(r, 6), round(s, 6)
        worst_w = max(worst_w, check_identity_W(basis(p), basis(r), a, x))
        worst_z = max(worst_z, check_identity_Z(basis(p), basis(r), s,
                                                phi(model, s), a, x))
    ok = worst_w < 1e-8 and worst_z < 1e-8
    _report(2, ok, f"worst residuals W {worst_w:.2e}, Z {worst_z:.2e} over 50 draws",
            time.perf_counter() - t0, 10.0)


def test_criterion_03_parisian_reduction(model):
    t0 = time.perf_counter()
    # p = 0 exercises the full quadrature path (p = q collapses the kernel
    # and reproduces the closed form identically)
    table = solve_H(model, parisian(PHI).shifted(Q),
                    SolverConfig(p=0.0, grid_step=GRID_STEP, x_max=3.0))
    basis = scale_basis(model, Q)
    ref = np.asarray(Z(basis, table.grid, Q + PHI, table.big_phi))
    sup_rel = float(np.max(np.abs(table.H - ref) / ref))
    ok = sup_rel < 1e-5
    _report(3, ok, f"sup relative error {sup_rel:.2e} on [0, 3] at step 1e-3",
            time.perf_counter() - t0, 30.0)


def test_criterion_04_p_independence(model):
    t0 = time.perf_counter()
    om = step_family(3, A, PHI).shifted(Q)
    tables = [solve_H(model, om, SolverConfig(p=p, grid_step=2e-5, x_max=X_MAX))
              for p in (0.0, Q / 2, Q)]
    scale = max(float(np.max(t.H)) for t in tables)
    dev = max(float(np.max(np.abs(t.H - tables[0].H))) for t in tables[1:])
    ok = dev <= 1e-8 * scale
    _report(4, ok, f"sup deviation {dev:.2e} vs 1e-8*scale = {1e-8 * scale:.2e}",
            time.perf_counter() - t0, 60.0)


@pytest.fixture(scope="module")
def solved_configs(model):
    out = {}
    for label, rate in _step_configs() + _affine_configs():
        out[label] = (rate, solve_H(model, rate.shifted(Q),
                                    SolverConfig(grid_step=GRID_STEP,
                                                 x_max=X_MAX)))
    return out


def test_criterion_05_methods_and_refinement(model, solved_configs):
    t0 = time.perf_counter()
    worst_gap = 0.0
    worst_ratio = (4.0, "")
    ratios = {}
    for label, (rate, t_march) in solved_configs.items():
        om = rate.shifted(Q)
        t_pic = solve_H(model, om, SolverConfig(grid_step=GRID_STEP,
                                                x_max=X_MAX, method="picard"))
        scale = float(np.max(t_march.H))
        gap = float(np.max(np.abs(t_march.H - t_pic.H)))
        tol = max(10 * t_pic.meta.picard_tol, GRID_STEP**2) * scale
        assert gap < tol, f"{label}: picard/marching gap {gap:.2e} > {tol:.2e}"
        worst_gap = max(worst_gap, gap / scale)

        # refinement with p = 0 so every configuration exercises quadrature
        tabs = {h: solve_H(model, om, SolverConfig(p=0.0, grid_step=h,
                                                   x_max=X_MAX))
                for h in (4e-3, 2e-3, 1e-3)}

        def diff(ta, tb):
            mask = ta.grid >= 0.0
            idx = np.searchsorted(tb.grid, ta.grid[mask])
            assert np.max(np.abs(tb.grid[idx] - ta.grid[mask])) < 1e-9
            return float(np.max(np.abs(ta.H[mask] - tb.H[idx])))

        ratio = diff(tabs[4e-3], tabs[2e-3]) / diff(tabs[2e-3], tabs[1e-3])
        ratios[label] = ratio
        assert 3.0 < ratio < 5.0, f"{label}: refinement ratio {ratio:.2f}"
    ok = True
    detail = (f"picard gap <= {worst_gap:.1e}*scale; refinement ratios "
              + " ".join(f"{k}={v:.2f}" for k, v in ratios.items()))
    _report(5, ok, detail, time.perf_counter() - t0, 300.0)


def test_criterion_06_convexity(solved_configs):
    t0 = time.perf_counter()
    worst_c = worst_l = np.inf
    for label, (rate, table) in solved_configs.items():
        rep = convexity_report(table)
        assert rep.convex_margin >= -1e-8 * rep.convex_scale, label
        assert rep.logconvex_margin >= -1e-8 * rep.log_scale, label
        worst_c = min(worst_c, rep.convex_margin / rep.convex_scale)
        worst_l = min(worst_l, rep.logconvex_margin / rep.log_scale)
    _report(6, True, f"worst normalised margins: convexity {worst_c:.2e}, "
            f"log-convexity {worst_l:.2e}", time.perf_counter() - t0, 60.0)


def test_criterion_07_barrier_orderings(model, solved_configs):
    t0 = time.perf_counter()
    par_table = solve_H(model, parisian(PHI).shifted(Q),
                        SolverConfig(grid_step=GRID_STEP, x_max=X_MAX))
    b_step = [find_barrier(par_table).b_star]
    for n in range(1, 6):
        b_step.append(find_barrier(solved_configs[f"step_n{n}"][1]).b_star)
    b_aff = [find_barrier(solved_configs[f"affine_m{m:g}"][1]).b_star
             for m in (-1.5, -1.0, -0.5, 0.0)]
    ok_step = all(b2 <= b1 + 1e-9 for b1, b2 in zip(b_step, b_step[1:]))
    ok_aff = all(b1 <= b2 + 1e-9 for b1, b2 in zip(b_aff, b_aff[1:]))
    detail = ("b*(step n=0..5) = [" + ", ".join(f"{b:.4f}" for b in b_step)
              + "]; b*(affine m=-1.5..0) = ["
              + ", ".join(f"{b:.4f}" for b in b_aff) + "]")
    _report(7, ok_step and ok_aff, detail, time.perf_counter() - t0, 300.0)


@pytest.fixture(scope="module")
def hjb_solutions(model):
    out = {}
    for label, rate in (("parisian", parisian(PHI)),
                        ("step_n3", step_family(3, A, PHI))):
        table = solve_H(model, rate.shifted(Q),
                        SolverConfig(grid_step=5e-4, x_max=3.0))
        out[label] = (rate, find_barrier(table))
    return out


def test_criterion_08_hjb_residuals(hjb_solutions):
    t0 = time.perf_counter()
    worst_in = worst_out = -np.inf
    for label, (rate, sol) in hjb_solutions.items():
        b = sol.b_star
        assert b > 0.0, label
        inside = np.linspace(b / 21, b * 20 / 21, 20)
        for x in inside:
            x = float(x)
            scale = (Q + float(rate.value(x))) * float(value_at(sol, x))
            r = abs(hjb_residual(sol, x)) / scale
            worst_in = max(worst_in, r)
            assert r <= 1e-4, f"{label}: |residual| {r:.2e} at x={x:.3f}"
        outside = np.linspace(b + 0.1, b + 2.0, 20)
        for x in outside:
            x = float(x)
            scale = (Q + float(rate.value(x))) * float(value_at(sol, x))
            r = hjb_residual(sol, x) / scale
            worst_out = max(worst_out, r)
            assert r <= 1e-6, f"{label}: one-sided residual {r:.2e} at x={x:.3f}"
    _report(8, True, f"worst |residual|/scale inside {worst_in:.2e}; "
            f"worst signed residual/scale beyond {worst_out:.2e}",
            time.perf_counter() - t0, 120.0)


def test_criterion_09_monte_carlo(model, hjb_solutions):
    t0 = time.perf_counter()
    dt = 1e-3
    lines = []
    sols = {}
    for label, rate in (("parisian", parisian(PHI)),
                        ("step_n2", step_family(2, A, PHI))):
        table = solve_H(model, rate.shifted(Q),
                        SolverConfig(grid_step=GRID_STEP, x_max=3.0))
        sols[label] = (rate, find_barrier(table))
    for label, (rate, sol) in sols.items():
        b = sol.b_star
        for k, x0 in enumerate((0.0, 0.5, b)):
            est = simulate_value(model, rate, Q, b, float(x0),
                                 McConfig(dt=dt, n_paths=200_000,
                                          seed=1000 + k))
            target = float(value_at(sol, float(x0)))
            gap = abs(est.mean - target)
            tol = 3.0 * est.stderr + 2.0 * dt
            assert gap <= tol, (f"{label} x0={x0:.3f}: |{est.mean:.5f} - "
                                f"{target:.5f}| = {gap:.2e} > {tol:.2e}")
            lines.append(f"{label}/x0={x0:.2f}: dev {gap / est.stderr:.2f} sigma")
        killed = simulate_value(model, rate, Q, b, 0.5,
                                McConfig(dt=dt, n_paths=200_000, seed=2001,
                                         estimator="killed"))
        disc = simulate_value(model, rate, Q, b, 0.5,
                              McConfig(dt=dt, n_paths=200_000, seed=1001))
        comb = float(np.hypot(killed.stderr, disc.stderr))
        gap = abs(killed.mean - disc.mean)
        assert gap <= 3.0 * comb, f"{label}: estimator gap {gap:.2e} > {3 * comb:.2e}"
        lines.append(f"{label}: estimators within {gap / comb:.2f} combined sigma")
    _report(9, True, "; ".join(lines), time.perf_counter() - t0, 600.0)


def test_criterion_10_barrier_dominance(model, hjb_solutions):
    t0 = time.perf_counter()
    worst = -np.inf
    for label, (rate, sol) in hjb_solutions.items():
        t = sol.table
        xs = t.grid
        v_star = np.asarray(value_at(sol, xs))
        scale = float(np.max(v_star))
        for b in (0.0, sol.b_star / 2, 2 * sol.b_star):
            v_b = np.asarray(barrier_value_at(t, b, xs))
            excess = float(np.max(v_b - v_star))
            worst = max(worst, excess / scale)
            assert excess <= 1e-10 * scale, f"{label} b={b:.3f}: excess {excess:.2e}"
    _report(10, True, f"max (v_b - v*)/scale = {worst:.2e} over competitors",
            time.perf_counter() - t0, 60.0)
